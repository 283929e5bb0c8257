#include <cmath>

#include "mebart/priors.hpp"
#include "mebart/tree.hpp"

namespace mebart {

namespace {

struct SideStats {
  std::int64_t n = 0;
  double sum = 0.0;
};

}  // namespace

TreeStepResult update_tree_structure(Tree& tree, NodeAssignment& assignment, std::span<const double> residuals,
                                     const Matrix<Cell>& cells, const CutpointGrid& grid, double sigma2,
                                     const HyperParams& hp, Rng& rng) {
  const MoveProposal prop = propose_move(tree, grid, rng);
  const TreeMove& mv = prop.move;
  const double s2mu = hp.sigma_mu2();
  auto& leaf_of = assignment.leaf_of;
  const std::size_t n = leaf_of.size();

  double log_ratio = prop.log_reverse - prop.log_forward;
  if (mv.kind == MoveKind::grow) {
    SideStats left, right;
    const auto var = static_cast<std::size_t>(mv.var);
    for (std::size_t i = 0; i < n; ++i) {
      if (leaf_of[i] != mv.node) continue;
      SideStats& side = cells(i, var) <= mv.cut ? left : right;
      ++side.n;
      side.sum += residuals[i];
    }
    if (left.n < hp.min_leaf_size || right.n < hp.min_leaf_size) {
      rng.uniform();
      return {mv.kind, false};
    }
    log_ratio += log_grow_prior_ratio(tree.node(mv.node).depth, grid.num_vars(), grid.num_cuts(var), hp);
    log_ratio += leaf_log_evidence(left.n, left.sum, sigma2, s2mu) + leaf_log_evidence(right.n, right.sum, sigma2, s2mu) -
                 leaf_log_evidence(left.n + right.n, left.sum + right.sum, sigma2, s2mu);
    if (std::log(rng.uniform()) >= log_ratio) return {mv.kind, false};
    const auto [l, r] = tree.grow(mv.node, mv.var, mv.cut);
    for (std::size_t i = 0; i < n; ++i)
      if (leaf_of[i] == mv.node) leaf_of[i] = cells(i, var) <= mv.cut ? l : r;
    return {mv.kind, true};
  }

  const Node& nd = tree.node(mv.node);
  const std::int32_t l = nd.left;
  const std::int32_t r = nd.right;
  SideStats left, right;
  for (std::size_t i = 0; i < n; ++i) {
    if (leaf_of[i] == l) {
      ++left.n;
      left.sum += residuals[i];
    } else if (leaf_of[i] == r) {
      ++right.n;
      right.sum += residuals[i];
    }
  }
  if (left.n + right.n < hp.min_leaf_size) {
    rng.uniform();
    return {mv.kind, false};
  }
  log_ratio -= log_grow_prior_ratio(nd.depth, grid.num_vars(), grid.num_cuts(static_cast<std::size_t>(nd.var)), hp);
  log_ratio += leaf_log_evidence(left.n + right.n, left.sum + right.sum, sigma2, s2mu) -
               leaf_log_evidence(left.n, left.sum, sigma2, s2mu) - leaf_log_evidence(right.n, right.sum, sigma2, s2mu);
  if (std::log(rng.uniform()) >= log_ratio) return {mv.kind, false};
  tree.prune(mv.node);
  for (std::size_t i = 0; i < n; ++i)
    if (leaf_of[i] == l || leaf_of[i] == r) leaf_of[i] = mv.node;
  return {mv.kind, true};
}

}  // namespace mebart
