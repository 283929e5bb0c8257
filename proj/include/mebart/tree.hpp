#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mebart/matrix.hpp"
#include "mebart/rng.hpp"

namespace mebart {

/// Index of the half-open interval between consecutive cutpoints that a value
/// falls into: the number of cutpoints <= x. Routing `x < c_k` is then the
/// integer test `cell <= k`.
using Cell = std::uint16_t;

/// Candidate split values, one strictly increasing sequence per variable.
class CutpointGrid {
 public:
  CutpointGrid() = default;
  explicit CutpointGrid(std::vector<std::vector<double>> cuts);

  /// `n_cuts` equally spaced values per column spanning
  /// [min(x_j) - 3 sigma_e_j, max(x_j) + 3 sigma_e_j]. A column with zero span
  /// collapses to a single cutpoint.
  static CutpointGrid expanded(const Matrix<double>& x, std::span<const double> sigma_e, int n_cuts);

  std::size_t num_vars() const { return cuts_.size(); }
  int num_cuts(std::size_t var) const { return static_cast<int>(cuts_[var].size()); }
  double value(std::size_t var, int cut) const { return cuts_[var][static_cast<std::size_t>(cut)]; }
  std::span<const double> cuts(std::size_t var) const { return cuts_[var]; }

  Cell cell(std::size_t var, double x) const;
  void cells(std::span<const double> x, std::span<Cell> out) const;
  Matrix<Cell> cells(const Matrix<double>& x) const;

  friend bool operator==(const CutpointGrid&, const CutpointGrid&) = default;

 private:
  std::vector<std::vector<double>> cuts_;
};

struct Node {
  std::int32_t var = -1;  // -1 for leaves
  std::int32_t cut = 0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t parent = -1;
  std::int32_t depth = 0;
  double mu = 0.0;
  bool free = false;

  bool is_leaf() const { return var < 0; }
};

/// Flattened node record used for persistence (preorder, compact ids).
struct NodeRecord {
  std::int32_t var;
  std::int32_t cut;
  std::int32_t left;
  std::int32_t right;
  double mu;
};

/// Binary decision tree stored in an index arena. The root is always node 0.
/// Freed slots from prunes are recycled by later grows.
class Tree {
 public:
  explicit Tree(double mu = 0.0);

  static constexpr std::int32_t root = 0;

  const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t arena_size() const { return nodes_.size(); }
  void set_mu(std::int32_t leaf, double mu) { nodes_[static_cast<std::size_t>(leaf)].mu = mu; }

  /// Splits `leaf` on (var, cut); returns the new (left, right) child ids.
  std::pair<std::int32_t, std::int32_t> grow(std::int32_t leaf, std::int32_t var, std::int32_t cut);
  /// Collapses an internal node whose children are both leaves.
  void prune(std::int32_t node);

  std::vector<std::int32_t> leaves() const;
  /// Internal nodes whose two children are leaves.
  std::vector<std::int32_t> prunable() const;
  std::size_t num_leaves() const;
  std::size_t num_prunable() const;

  std::int32_t find_leaf(std::span<const Cell> cells) const {
    std::int32_t id = root;
    const Node* nd = &nodes_[0];
    while (nd->var >= 0) {
      id = cells[static_cast<std::size_t>(nd->var)] <= nd->cut ? nd->left : nd->right;
      nd = &nodes_[static_cast<std::size_t>(id)];
    }
    return id;
  }
  std::int32_t find_leaf(std::span<const double> x, const CutpointGrid& grid) const;

  std::vector<NodeRecord> to_records() const;
  static Tree from_records(std::span<const NodeRecord> records);

 private:
  std::int32_t allocate();

  std::vector<Node> nodes_;
  std::vector<std::int32_t> free_;
};

/// Same split structure (variables, cutpoints, shape) ignoring leaf values
/// and arena layout.
bool same_structure(const Tree& a, const Tree& b);

/// Leaf value reached by `x`; go left iff x[var] < cutpoint value.
double evaluate_tree(const Tree& tree, const CutpointGrid& grid, std::span<const double> x);
/// Sum of tree outputs.
double evaluate_ensemble(std::span<const Tree> trees, const CutpointGrid& grid, std::span<const double> x);
inline double evaluate_ensemble_cells(std::span<const Tree> trees, std::span<const Cell> cells) {
  double f = 0.0;
  for (const Tree& t : trees) f += t.node(t.find_leaf(cells)).mu;
  return f;
}

/// Ensemble evaluated at every row of a cell matrix. The OpenMP kernel and the
/// serial reference produce bitwise identical output.
void evaluate_rows(std::span<const Tree> trees, const Matrix<Cell>& cells, std::span<double> out);
void evaluate_rows_serial(std::span<const Tree> trees, const Matrix<Cell>& cells, std::span<double> out);

/// Leaf index of every observation for one tree.
struct NodeAssignment {
  std::vector<std::int32_t> leaf_of;

  static NodeAssignment from_cells(const Tree& tree, const Matrix<Cell>& cells);
  friend bool operator==(const NodeAssignment&, const NodeAssignment&) = default;
};

/// Per-leaf sufficient statistics: counts and residual sums.
struct LeafStats {
  std::vector<std::int32_t> leaves;
  std::vector<std::int64_t> count;
  std::vector<double> sum;

  static LeafStats collect(const Tree& tree, const NodeAssignment& assignment, std::span<const double> residuals);
};

enum class MoveKind { grow, prune };

struct TreeMove {
  MoveKind kind;
  std::int32_t node;  // leaf to split, or node to collapse
  std::int32_t var;
  std::int32_t cut;
};

struct MoveProposal {
  TreeMove move;
  double log_forward;
  double log_reverse;
};

/// Probability of proposing GROW from `tree`: 1 for a single leaf, else 1/2.
double grow_probability(const Tree& tree);

/// Draws a GROW (uniform leaf, variable, cutpoint) or PRUNE (uniform prunable
/// node) proposal together with its forward and reverse log proposal densities.
MoveProposal propose_move(const Tree& tree, const CutpointGrid& grid, Rng& rng);

/// Log proposal density of `move` when proposed from `tree`.
double log_move_density(const Tree& tree, const CutpointGrid& grid, const TreeMove& move);

/// Log normal-normal evidence of one leaf with the residual-only terms removed:
/// 1/2 log(s2 / (s2 + n s2mu)) + s2mu sum^2 / (2 s2 (s2 + n s2mu)).
double leaf_log_evidence(std::int64_t count, double sum, double sigma2, double sigma_mu2);

/// Full log marginal likelihood of the residuals under `tree` with every leaf
/// value integrated against N(0, sigma_mu2). Equals the sum of
/// leaf_log_evidence over leaves plus -n/2 log(2 pi s2) - sum r^2 / (2 s2);
/// the latter terms cancel in structure MH ratios and are skipped there.
double log_marginal_likelihood(const Tree& tree, const NodeAssignment& assignment,
                               std::span<const double> residuals, double sigma2, double sigma_mu2);

struct HyperParams;

struct TreeStepResult {
  MoveKind kind;
  bool accepted;
};

/// One Metropolis-Hastings update of a tree's structure against the partial
/// residuals; leaf values are not touched. `assignment` is kept consistent
/// with `cells` when a move is accepted.
TreeStepResult update_tree_structure(Tree& tree, NodeAssignment& assignment, std::span<const double> residuals,
                                     const Matrix<Cell>& cells, const CutpointGrid& grid, double sigma2,
                                     const HyperParams& hp, Rng& rng);

}  // namespace mebart
