#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "mebart/priors.hpp"
#include "mebart/tree.hpp"
#include "oracles.hpp"

using namespace mebart;

namespace {

CutpointGrid one_var_grid(std::vector<double> cuts) { return CutpointGrid({std::move(cuts)}); }

Tree stump(double left, double right, int cut = 0) {
  Tree t;
  auto [l, r] = t.grow(Tree::root, 0, cut);
  t.set_mu(l, left);
  t.set_mu(r, right);
  return t;
}

std::string structure_key(const Tree& t) {
  std::ostringstream s;
  for (const auto& r : t.to_records()) s << r.var << ':' << r.cut << ';';
  return s.str();
}

}  // namespace

TEST_CASE("evaluate_tree follows x < c to the left") {
  const CutpointGrid grid = one_var_grid({0.0});
  Tree leaf(0.3);
  const double x_any[] = {12.5};
  CHECK(evaluate_tree(leaf, grid, x_any) == 0.3);

  const Tree t = stump(-1.0, 1.0);
  const double neg[] = {-0.2}, zero[] = {0.0};
  CHECK(evaluate_tree(t, grid, neg) == -1.0);
  CHECK(evaluate_tree(t, grid, zero) == 1.0);
}

TEST_CASE("evaluate_ensemble sums tree outputs") {
  const CutpointGrid grid = one_var_grid({0.0});
  const double x[] = {-0.2};
  std::vector<Tree> two = {Tree(0.1), Tree(-0.4)};
  CHECK(evaluate_ensemble(two, grid, x) == doctest::Approx(-0.3).epsilon(1e-15));

  std::vector<Tree> same(7, Tree(0.25));
  CHECK(evaluate_ensemble(same, grid, x) == doctest::Approx(7 * 0.25));

  std::vector<Tree> mixed = {stump(-1.0, 1.0), stump(-1.0, 1.0), Tree(0.5)};
  CHECK(evaluate_ensemble(mixed, grid, x) == doctest::Approx(-1.5));
  std::vector<Tree> doc = {stump(-1.0, 1.0), Tree(0.5)};
  CHECK(evaluate_ensemble(doc, grid, x) == doctest::Approx(-0.5));
}

TEST_CASE("cell routing agrees with value routing at and around every cut") {
  const CutpointGrid grid = one_var_grid({-1.0, -0.25, 0.0, 0.5, 2.0});
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Tree t;
    for (int g = 0; g < 4; ++g) {
      const auto leaves = t.leaves();
      const auto leaf = leaves[rng.index(leaves.size())];
      t.grow(leaf, 0, static_cast<std::int32_t>(rng.index(5)));
    }
    for (const double c : grid.cuts(0)) {
      for (const double x : {c, std::nextafter(c, -10.0), std::nextafter(c, 10.0), c + 0.1}) {
        const double xs[] = {x};
        const Cell cells[] = {grid.cell(0, x)};
        const Node* nd = &t.node(Tree::root);
        while (!nd->is_leaf()) nd = &t.node(x < grid.value(0, nd->cut) ? nd->left : nd->right);
        CHECK(t.find_leaf(cells) == t.find_leaf(xs, grid));
        CHECK(&t.node(t.find_leaf(cells)) == nd);
      }
    }
  }
}

TEST_CASE("expanded grid spans the observed range widened by three sigma_e") {
  Matrix<double> x(3, 2);
  x(0, 0) = -1.0, x(1, 0) = 0.5, x(2, 0) = 2.0;
  x(0, 1) = 4.0, x(1, 1) = 4.0, x(2, 1) = 4.0;
  const double se[] = {0.1, 0.2};
  const CutpointGrid g = CutpointGrid::expanded(x, se, 100);
  REQUIRE(g.num_cuts(0) == 100);
  CHECK(g.value(0, 0) == doctest::Approx(-1.3));
  CHECK(g.value(0, 99) == doctest::Approx(2.3));
  CHECK(g.num_cuts(1) == 100);
  CHECK(g.value(1, 0) == doctest::Approx(3.4));

  const double none[] = {0.0, 0.0};
  const CutpointGrid flat = CutpointGrid::expanded(x, none, 100);
  CHECK(flat.num_cuts(1) == 1);
  CHECK_THROWS(CutpointGrid({{1.0, 1.0}}));
}

TEST_CASE("single-leaf trees always propose GROW") {
  std::vector<double> cuts(100);
  for (int k = 0; k < 100; ++k) cuts[static_cast<std::size_t>(k)] = k * 0.01;
  const CutpointGrid grid = one_var_grid(cuts);
  Tree t;
  Rng rng(11);
  for (int k = 0; k < 500; ++k) {
    const MoveProposal p = propose_move(t, grid, rng);
    CHECK(p.move.kind == MoveKind::grow);
    CHECK(p.log_forward == doctest::Approx(std::log(1.0 / 100.0)));
  }
}

TEST_CASE("GROW density on a depth-1 tree is P(GROW) / leaves / p / cuts") {
  std::vector<double> cuts(100);
  for (int k = 0; k < 100; ++k) cuts[static_cast<std::size_t>(k)] = k * 0.01;
  const CutpointGrid grid = one_var_grid(cuts);
  const Tree t = stump(0.0, 0.0, 50);
  const TreeMove m{MoveKind::grow, t.leaves()[0], 0, 17};
  CHECK(log_move_density(t, grid, m) == doctest::Approx(std::log(0.5 * 0.5 * 1.0 * 0.01)).epsilon(1e-14));
}

TEST_CASE("proposal densities are mutually consistent and GROW/PRUNE round-trips") {
  const CutpointGrid grid = CutpointGrid({{0.0, 1.0, 2.0}, {-1.0, 1.0}});
  Rng rng(5);
  Tree t;
  for (int step = 0; step < 2000; ++step) {
    const MoveProposal p = propose_move(t, grid, rng);
    CHECK(p.log_forward == doctest::Approx(log_move_density(t, grid, p.move)).epsilon(1e-14));
    Tree next = t;
    TreeMove reverse{};
    if (p.move.kind == MoveKind::grow) {
      next.grow(p.move.node, p.move.var, p.move.cut);
      reverse = TreeMove{MoveKind::prune, p.move.node, -1, -1};
      Tree back = next;
      back.prune(p.move.node);
      CHECK(same_structure(back, t));
    } else {
      const Node& nd = t.node(p.move.node);
      next.prune(p.move.node);
      reverse = TreeMove{MoveKind::grow, p.move.node, nd.var, nd.cut};
      Tree back = next;
      back.grow(p.move.node, nd.var, nd.cut);
      CHECK(same_structure(back, t));
    }
    CHECK(p.log_reverse == doctest::Approx(log_move_density(next, grid, reverse)).epsilon(1e-14));
    if (next.num_leaves() <= 6) t = next;
  }
}

TEST_CASE("tree records round-trip through persistence form") {
  Rng rng(8);
  Tree t;
  for (int g = 0; g < 6; ++g) {
    const auto leaves = t.leaves();
    t.grow(leaves[rng.index(leaves.size())], static_cast<std::int32_t>(rng.index(2)), static_cast<std::int32_t>(rng.index(3)));
  }
  t.prune(t.prunable().front());
  for (auto leaf : t.leaves()) t.set_mu(leaf, rng.normal());
  const Tree u = Tree::from_records(t.to_records());
  CHECK(same_structure(t, u));
  CHECK(u.to_records().size() == t.to_records().size());
  const CutpointGrid grid = CutpointGrid({{0.0, 1.0, 2.0}, {-1.0, 0.0, 1.0}});
  for (int k = 0; k < 100; ++k) {
    const double x[] = {rng.normal() * 2.0, rng.normal()};
    CHECK(evaluate_tree(t, grid, x) == evaluate_tree(u, grid, x));
  }
}

TEST_CASE("single-leaf evidence with zero residuals reduces to the log-determinant term") {
  const double s2 = 0.7, s2mu = 0.3;
  CHECK(leaf_log_evidence(5, 0.0, s2, s2mu) == doctest::Approx(0.5 * std::log(s2 / (s2 + 5 * s2mu))));
}

TEST_CASE("marginal likelihood matches quadrature on every tree with at most three leaves") {
  // Datasets: n = 1..6 points on a 1-D grid of three cuts, residuals fixed
  // per n. Trees: the leaf, every stump, and every stump with one child split.
  const CutpointGrid grid = one_var_grid({-0.5, 0.0, 0.5});
  const double s2 = 0.4, s2mu = 0.25;
  const std::vector<double> xs = {-0.9, -0.3, 0.1, 0.7, -0.1, 0.4};
  const std::vector<double> rs = {0.3, -1.2, 0.8, 0.05, -0.4, 1.7};
  std::vector<Tree> trees{Tree()};
  for (int c = 0; c < 3; ++c) {
    trees.push_back(stump(0, 0, c));
    for (int side = 0; side < 2; ++side)
      for (int c2 = 0; c2 < 3; ++c2) {
        Tree t = stump(0, 0, c);
        t.grow(side == 0 ? t.node(Tree::root).left : t.node(Tree::root).right, 0, c2);
        trees.push_back(t);
      }
  }
  int checked = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    Matrix<double> x(n, 1);
    std::vector<double> r(rs.begin(), rs.begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t i = 0; i < n; ++i) x(i, 0) = xs[i];
    const Matrix<Cell> cells = grid.cells(x);
    for (const Tree& t : trees) {
      const NodeAssignment a = NodeAssignment::from_cells(t, cells);
      double expected = 0.0;
      for (auto leaf : t.leaves()) {
        std::vector<double> in_leaf;
        for (std::size_t i = 0; i < n; ++i)
          if (a.leaf_of[i] == leaf) in_leaf.push_back(r[i]);
        expected += oracle::quadrature_leaf(in_leaf, s2, s2mu);
      }
      CHECK(std::abs(log_marginal_likelihood(t, a, r, s2, s2mu) - expected) < 1e-8);
      ++checked;
    }
  }
  CHECK(checked == 6 * 22);
}

TEST_CASE("marginal likelihood ratio matches brute-force prior sampling") {
  // Three points; compare the split-vs-leaf Bayes factor with a Monte Carlo
  // average of the likelihood over prior draws of the leaf values.
  const std::vector<double> r = {0.4, 0.1, -0.5};
  const double s2 = 0.5, s2mu = 0.5;
  const CutpointGrid grid = one_var_grid({0.0});
  Matrix<double> x(3, 1);
  x(0, 0) = -1.0, x(1, 0) = -0.5, x(2, 0) = 1.0;
  const Matrix<Cell> cells = grid.cells(x);
  const Tree leaf, split = stump(0, 0, 0);
  const double analytic = log_marginal_likelihood(split, NodeAssignment::from_cells(split, cells), r, s2, s2mu) -
                          log_marginal_likelihood(leaf, NodeAssignment::from_cells(leaf, cells), r, s2, s2mu);
  auto lik = [&](std::initializer_list<std::size_t> idx, double mu) {
    double v = 1.0;
    for (std::size_t i : idx) v *= std::exp(-0.5 * (r[i] - mu) * (r[i] - mu) / s2) / std::sqrt(2.0 * std::numbers::pi * s2);
    return v;
  };
  Rng rng(99);
  const int draws = 400000;
  double m_leaf = 0.0, m_left = 0.0, m_right = 0.0;
  for (int k = 0; k < draws; ++k) {
    const double a = rng.normal(0.0, std::sqrt(s2mu)), b = rng.normal(0.0, std::sqrt(s2mu)), c = rng.normal(0.0, std::sqrt(s2mu));
    m_leaf += lik({0, 1, 2}, a);
    m_left += lik({0, 1}, b);
    m_right += lik({2}, c);
  }
  const double mc = std::log(m_left / draws) + std::log(m_right / draws) - std::log(m_leaf / draws);
  CHECK(mc == doctest::Approx(analytic).epsilon(0.01));
}

TEST_CASE("structure Metropolis-Hastings samples prior times marginal likelihood") {
  // Toy problem small enough to enumerate: four points, two cutpoints, every
  // leaf must hold at least one point.
  HyperParams hp;
  hp.num_trees = 1;
  hp.k = 0.5;  // sigma_mu = 1
  hp.mu_x = {0.0};
  hp.sigma_x2 = {1.0};
  hp.sigma_e2 = {0.0};
  hp.proposal_sd = {0.0};
  const CutpointGrid grid = one_var_grid({-0.5, 0.5});
  Matrix<double> x(4, 1);
  x(0, 0) = -1.0, x(1, 0) = -0.8, x(2, 0) = 0.0, x(3, 0) = 1.0;
  const std::vector<double> r = {-0.6, -0.9, 0.2, 1.1};
  const double s2 = 0.3;
  const Matrix<Cell> cells = grid.cells(x);

  // Enumerate reachable trees with no empty leaf.
  std::map<std::string, double> target;
  std::vector<Tree> frontier{Tree()};
  while (!frontier.empty()) {
    Tree t = frontier.back();
    frontier.pop_back();
    const std::string key = structure_key(t);
    if (target.count(key)) continue;
    const NodeAssignment a = NodeAssignment::from_cells(t, cells);
    target[key] = log_tree_structure_prior(t, grid, hp) + log_marginal_likelihood(t, a, r, s2, hp.sigma_mu2());
    for (auto leaf : t.leaves())
      for (int c = 0; c < 2; ++c) {
        Tree g = t;
        g.grow(leaf, 0, c);
        const LeafStats st = LeafStats::collect(g, NodeAssignment::from_cells(g, cells), r);
        if (std::all_of(st.count.begin(), st.count.end(), [](auto n) { return n >= 1; })) frontier.push_back(g);
      }
  }
  double z = 0.0;
  for (auto& [k, v] : target) z += std::exp(v);
  for (auto& [k, v] : target) v = std::exp(v) / z;
  REQUIRE(target.size() >= 5);

  Tree t;
  NodeAssignment a = NodeAssignment::from_cells(t, cells);
  Rng rng(2024);
  std::map<std::string, double> freq;
  const int steps = 1500000;
  for (int s = 0; s < steps; ++s) {
    update_tree_structure(t, a, r, cells, grid, s2, hp, rng);
    freq[structure_key(t)] += 1.0 / steps;
  }
  CHECK(a == NodeAssignment::from_cells(t, cells));
  double tv = 0.0;
  for (auto& [k, p] : target) tv += 0.5 * std::abs(p - freq[k]);
  for (auto& [k, p] : freq) CHECK(target.count(k) == 1);
  CHECK(tv < 0.02);
}

TEST_CASE("incremental assignments equal a fresh traversal after accepted moves") {
  HyperParams hp;
  hp.num_trees = 1;
  hp.mu_x = {0.0, 0.0};
  hp.sigma_x2 = {1.0, 1.0};
  hp.sigma_e2 = {0.0, 0.0};
  hp.proposal_sd = {0.0, 0.0};
  Rng data_rng(1);
  Matrix<double> x(60, 2);
  std::vector<double> r(60);
  for (std::size_t i = 0; i < 60; ++i) {
    x(i, 0) = data_rng.normal();
    x(i, 1) = data_rng.normal();
    r[i] = (x(i, 0) > 0 ? 1.0 : -1.0) + 0.1 * data_rng.normal();
  }
  const double no_noise[] = {0.0, 0.0};
  const CutpointGrid grid = CutpointGrid::expanded(x, no_noise, 20);
  const Matrix<Cell> cells = grid.cells(x);
  Tree t;
  NodeAssignment a = NodeAssignment::from_cells(t, cells);
  Rng rng(4);
  int accepted = 0;
  for (int s = 0; s < 3000; ++s) {
    accepted += update_tree_structure(t, a, r, cells, grid, 0.05, hp, rng).accepted;
    REQUIRE(a == NodeAssignment::from_cells(t, cells));
  }
  CHECK(accepted > 10);
  const LeafStats st = LeafStats::collect(t, a, r);
  std::int64_t total = 0;
  for (auto c : st.count) total += c;
  CHECK(total == 60);
}

TEST_CASE("parallel and serial row evaluation agree bitwise") {
  Rng rng(12);
  const CutpointGrid grid = CutpointGrid({{-1.0, 0.0, 1.0}, {-0.5, 0.5}});
  std::vector<Tree> trees(50);
  for (Tree& t : trees) {
    for (int g = 0; g < 3; ++g) {
      const auto leaves = t.leaves();
      t.grow(leaves[rng.index(leaves.size())], static_cast<std::int32_t>(rng.index(2)), static_cast<std::int32_t>(rng.index(2)));
    }
    for (auto leaf : t.leaves()) t.set_mu(leaf, rng.normal(0.0, 0.1));
  }
  Matrix<double> x(500, 2);
  for (double& v : x.values()) v = rng.normal();
  const Matrix<Cell> cells = grid.cells(x);
  std::vector<double> a(500), b(500);
  evaluate_rows(trees, cells, a);
  evaluate_rows_serial(trees, cells, b);
  CHECK(a == b);
  for (std::size_t i = 0; i < 500; ++i) CHECK(a[i] == evaluate_ensemble(trees, grid, x.row(i)));
}
