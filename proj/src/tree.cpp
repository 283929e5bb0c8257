#include "mebart/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mebart {

// ---------------------------------------------------------------------------
// CutpointGrid

CutpointGrid::CutpointGrid(std::vector<std::vector<double>> cuts) : cuts_(std::move(cuts)) {
  for (std::size_t v = 0; v < cuts_.size(); ++v) {
    const auto& c = cuts_[v];
    if (c.empty()) throw std::invalid_argument("cutpoint grid: variable " + std::to_string(v) + " has no cutpoints");
    if (c.size() > 65535) throw std::invalid_argument("cutpoint grid: too many cutpoints");
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (!std::isfinite(c[k])) throw std::invalid_argument("cutpoint grid: non-finite cutpoint");
      if (k > 0 && !(c[k] > c[k - 1])) throw std::invalid_argument("cutpoint grid: cutpoints must be strictly increasing");
    }
  }
}

CutpointGrid CutpointGrid::expanded(const Matrix<double>& x, std::span<const double> sigma_e, int n_cuts) {
  if (n_cuts < 1) throw std::invalid_argument("cutpoint grid: n_cuts must be >= 1");
  std::vector<std::vector<double>> cuts(x.cols());
  for (std::size_t v = 0; v < x.cols(); ++v) {
    double lo = x(0, v);
    double hi = x(0, v);
    for (std::size_t i = 1; i < x.rows(); ++i) {
      lo = std::min(lo, x(i, v));
      hi = std::max(hi, x(i, v));
    }
    const double pad = v < sigma_e.size() ? 3.0 * sigma_e[v] : 0.0;
    lo -= pad;
    hi += pad;
    auto& c = cuts[v];
    if (n_cuts == 1 || !(hi > lo)) {
      c.push_back(lo);
      continue;
    }
    c.resize(static_cast<std::size_t>(n_cuts));
    const double step = (hi - lo) / (n_cuts - 1);
    for (int k = 0; k < n_cuts; ++k) c[static_cast<std::size_t>(k)] = lo + step * k;
    c.back() = hi;
  }
  return CutpointGrid(std::move(cuts));
}

Cell CutpointGrid::cell(std::size_t var, double x) const {
  const auto& c = cuts_[var];
  return static_cast<Cell>(std::upper_bound(c.begin(), c.end(), x) - c.begin());
}

void CutpointGrid::cells(std::span<const double> x, std::span<Cell> out) const {
  for (std::size_t v = 0; v < cuts_.size(); ++v) out[v] = cell(v, x[v]);
}

Matrix<Cell> CutpointGrid::cells(const Matrix<double>& x) const {
  Matrix<Cell> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) cells(x.row(i), out.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Tree

Tree::Tree(double mu) {
  nodes_.push_back(Node{});
  nodes_[0].mu = mu;
}

std::int32_t Tree::allocate() {
  if (!free_.empty()) {
    const std::int32_t id = free_.back();
    free_.pop_back();
    nodes_[static_cast<std::size_t>(id)] = Node{};
    return id;
  }
  nodes_.push_back(Node{});
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

std::pair<std::int32_t, std::int32_t> Tree::grow(std::int32_t leaf, std::int32_t var, std::int32_t cut) {
  if (!node(leaf).is_leaf() || node(leaf).free) throw std::logic_error("grow: node is not a leaf");
  const std::int32_t l = allocate();
  const std::int32_t r = allocate();
  const std::int32_t depth = node(leaf).depth + 1;
  for (std::int32_t c : {l, r}) {
    Node& ch = nodes_[static_cast<std::size_t>(c)];
    ch.parent = leaf;
    ch.depth = depth;
  }
  Node& nd = nodes_[static_cast<std::size_t>(leaf)];
  nd.var = var;
  nd.cut = cut;
  nd.left = l;
  nd.right = r;
  nd.mu = 0.0;
  return {l, r};
}

void Tree::prune(std::int32_t id) {
  Node& nd = nodes_[static_cast<std::size_t>(id)];
  if (nd.is_leaf() || !node(nd.left).is_leaf() || !node(nd.right).is_leaf())
    throw std::logic_error("prune: node must have two leaf children");
  // Push right first so a following grow reuses (left, right) in order.
  for (std::int32_t c : {nd.right, nd.left}) {
    nodes_[static_cast<std::size_t>(c)].free = true;
    free_.push_back(c);
  }
  nd.var = -1;
  nd.cut = 0;
  nd.left = -1;
  nd.right = -1;
  nd.mu = 0.0;
}

std::vector<std::int32_t> Tree::leaves() const {
  std::vector<std::int32_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!nodes_[i].free && nodes_[i].is_leaf()) out.push_back(static_cast<std::int32_t>(i));
  return out;
}

std::vector<std::int32_t> Tree::prunable() const {
  std::vector<std::int32_t> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& nd = nodes_[i];
    if (nd.free || nd.is_leaf()) continue;
    if (node(nd.left).is_leaf() && node(nd.right).is_leaf()) out.push_back(static_cast<std::int32_t>(i));
  }
  return out;
}

std::size_t Tree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return !n.free && n.is_leaf(); }));
}

std::size_t Tree::num_prunable() const {
  std::size_t count = 0;
  for (const Node& nd : nodes_)
    if (!nd.free && !nd.is_leaf() && node(nd.left).is_leaf() && node(nd.right).is_leaf()) ++count;
  return count;
}

std::int32_t Tree::find_leaf(std::span<const double> x, const CutpointGrid& grid) const {
  std::int32_t id = root;
  while (!node(id).is_leaf()) {
    const Node& nd = node(id);
    id = x[static_cast<std::size_t>(nd.var)] < grid.value(static_cast<std::size_t>(nd.var), nd.cut) ? nd.left : nd.right;
  }
  return id;
}

std::vector<NodeRecord> Tree::to_records() const {
  std::vector<NodeRecord> out;
  std::function<std::int32_t(std::int32_t)> visit = [&](std::int32_t id) -> std::int32_t {
    const Node& nd = node(id);
    const auto slot = static_cast<std::int32_t>(out.size());
    out.push_back({nd.var, nd.cut, -1, -1, nd.mu});
    if (!nd.is_leaf()) {
      const std::int32_t l = visit(nd.left);
      const std::int32_t r = visit(nd.right);
      out[static_cast<std::size_t>(slot)].left = l;
      out[static_cast<std::size_t>(slot)].right = r;
    }
    return slot;
  };
  visit(root);
  return out;
}

Tree Tree::from_records(std::span<const NodeRecord> records) {
  if (records.empty()) throw std::invalid_argument("tree: empty record list");
  Tree t;
  t.nodes_.assign(records.size(), Node{});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const NodeRecord& r = records[i];
    Node& nd = t.nodes_[i];
    nd.var = r.var;
    nd.cut = r.cut;
    nd.mu = r.mu;
    if (r.var >= 0) {
      const auto n = static_cast<std::int32_t>(records.size());
      if (r.left <= static_cast<std::int32_t>(i) || r.right <= static_cast<std::int32_t>(i) || r.left >= n || r.right >= n)
        throw std::invalid_argument("tree: malformed child index");
      nd.left = r.left;
      nd.right = r.right;
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Node& nd = t.nodes_[i];
    if (nd.is_leaf()) continue;
    for (std::int32_t c : {nd.left, nd.right}) {
      Node& ch = t.nodes_[static_cast<std::size_t>(c)];
      ch.parent = static_cast<std::int32_t>(i);
      ch.depth = nd.depth + 1;
    }
  }
  return t;
}

bool same_structure(const Tree& a, const Tree& b) {
  std::function<bool(std::int32_t, std::int32_t)> eq = [&](std::int32_t x, std::int32_t y) {
    const Node& nx = a.node(x);
    const Node& ny = b.node(y);
    if (nx.is_leaf() != ny.is_leaf()) return false;
    if (nx.is_leaf()) return true;
    return nx.var == ny.var && nx.cut == ny.cut && eq(nx.left, ny.left) && eq(nx.right, ny.right);
  };
  return eq(Tree::root, Tree::root);
}

double evaluate_tree(const Tree& tree, const CutpointGrid& grid, std::span<const double> x) {
  return tree.node(tree.find_leaf(x, grid)).mu;
}

double evaluate_ensemble(std::span<const Tree> trees, const CutpointGrid& grid, std::span<const double> x) {
  double f = 0.0;
  for (const Tree& t : trees) f += evaluate_tree(t, grid, x);
  return f;
}

void evaluate_rows(std::span<const Tree> trees, const Matrix<Cell>& cells, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(cells.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = evaluate_ensemble_cells(trees, cells.row(static_cast<std::size_t>(i)));
  }
}

void evaluate_rows_serial(std::span<const Tree> trees, const Matrix<Cell>& cells, std::span<double> out) {
  for (std::size_t i = 0; i < cells.rows(); ++i) out[i] = evaluate_ensemble_cells(trees, cells.row(i));
}

// ---------------------------------------------------------------------------
// Assignment and sufficient statistics

NodeAssignment NodeAssignment::from_cells(const Tree& tree, const Matrix<Cell>& cells) {
  NodeAssignment a;
  a.leaf_of.resize(cells.rows());
  for (std::size_t i = 0; i < cells.rows(); ++i) a.leaf_of[i] = tree.find_leaf(cells.row(i));
  return a;
}

LeafStats LeafStats::collect(const Tree& tree, const NodeAssignment& assignment, std::span<const double> residuals) {
  LeafStats s;
  s.leaves = tree.leaves();
  std::vector<std::int32_t> slot(tree.arena_size(), -1);
  for (std::size_t k = 0; k < s.leaves.size(); ++k) slot[static_cast<std::size_t>(s.leaves[k])] = static_cast<std::int32_t>(k);
  s.count.assign(s.leaves.size(), 0);
  s.sum.assign(s.leaves.size(), 0.0);
  for (std::size_t i = 0; i < assignment.leaf_of.size(); ++i) {
    const auto k = static_cast<std::size_t>(slot[static_cast<std::size_t>(assignment.leaf_of[i])]);
    ++s.count[k];
    s.sum[k] += residuals[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Proposals

double grow_probability(const Tree& tree) { return tree.node(Tree::root).is_leaf() ? 1.0 : 0.5; }

double log_move_density(const Tree& tree, const CutpointGrid& grid, const TreeMove& move) {
  const double pg = grow_probability(tree);
  if (move.kind == MoveKind::grow) {
    return std::log(pg) - std::log(static_cast<double>(tree.num_leaves())) -
           std::log(static_cast<double>(grid.num_vars())) -
           std::log(static_cast<double>(grid.num_cuts(static_cast<std::size_t>(move.var))));
  }
  return std::log(1.0 - pg) - std::log(static_cast<double>(tree.num_prunable()));
}

MoveProposal propose_move(const Tree& tree, const CutpointGrid& grid, Rng& rng) {
  const double pg = grow_probability(tree);
  MoveProposal out{};
  if (rng.uniform() < pg) {
    const auto leaves = tree.leaves();
    const std::int32_t leaf = leaves[rng.index(leaves.size())];
    const auto var = static_cast<std::int32_t>(rng.index(grid.num_vars()));
    const auto cut = static_cast<std::int32_t>(rng.index(static_cast<std::size_t>(grid.num_cuts(static_cast<std::size_t>(var)))));
    out.move = {MoveKind::grow, leaf, var, cut};
    out.log_forward = std::log(pg) - std::log(static_cast<double>(leaves.size())) -
                      std::log(static_cast<double>(grid.num_vars())) -
                      std::log(static_cast<double>(grid.num_cuts(static_cast<std::size_t>(var))));
    // Reverse: PRUNE of the new node in the grown tree. The grown tree has at
    // least two leaves; its prunable set gains the split leaf and loses the
    // parent if the parent was prunable before.
    std::size_t nprune = tree.num_prunable() + 1;
    const std::int32_t parent = tree.node(leaf).parent;
    if (parent >= 0) {
      const Node& pn = tree.node(parent);
      if (tree.node(pn.left).is_leaf() && tree.node(pn.right).is_leaf()) --nprune;
    }
    out.log_reverse = std::log(0.5) - std::log(static_cast<double>(nprune));
  } else {
    const auto nogs = tree.prunable();
    const std::int32_t id = nogs[rng.index(nogs.size())];
    const Node& nd = tree.node(id);
    out.move = {MoveKind::prune, id, nd.var, nd.cut};
    out.log_forward = std::log(1.0 - pg) - std::log(static_cast<double>(nogs.size()));
    const std::size_t leaves_after = tree.num_leaves() - 1;
    const double pg_after = leaves_after == 1 ? 1.0 : 0.5;
    out.log_reverse = std::log(pg_after) - std::log(static_cast<double>(leaves_after)) -
                      std::log(static_cast<double>(grid.num_vars())) -
                      std::log(static_cast<double>(grid.num_cuts(static_cast<std::size_t>(nd.var))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Marginal likelihood

double leaf_log_evidence(std::int64_t count, double sum, double sigma2, double sigma_mu2) {
  const double n = static_cast<double>(count);
  const double denom = sigma2 + n * sigma_mu2;
  return 0.5 * std::log(sigma2 / denom) + sigma_mu2 * sum * sum / (2.0 * sigma2 * denom);
}

double log_marginal_likelihood(const Tree& tree, const NodeAssignment& assignment,
                               std::span<const double> residuals, double sigma2, double sigma_mu2) {
  const LeafStats stats = LeafStats::collect(tree, assignment, residuals);
  double out = 0.0;
  for (std::size_t k = 0; k < stats.leaves.size(); ++k) out += leaf_log_evidence(stats.count[k], stats.sum[k], sigma2, sigma_mu2);
  double ss = 0.0;
  for (double r : residuals) ss += r * r;
  const double n = static_cast<double>(residuals.size());
  out += -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - ss / (2.0 * sigma2);
  return out;
}

}  // namespace mebart
