#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mebart/matrix.hpp"
#include "mebart/priors.hpp"
#include "mebart/tree.hpp"

namespace mebart {

/// Current latent true predictors and Metropolis tallies per observation.
struct LatentState {
  Matrix<double> x;
  Matrix<Cell> cells;
  std::vector<std::uint64_t> accepted;
  std::vector<std::uint64_t> proposed;

  /// Starts at X* exactly.
  static LatentState initialize(const Matrix<double>& x_star, const CutpointGrid& grid);
  double acceptance_rate(std::size_t i) const {
    return proposed[i] == 0 ? 0.0 : static_cast<double>(accepted[i]) / static_cast<double>(proposed[i]);
  }
};

/// log N(y_i; f(x), s2) + log N_p(x*_i; x, Sigma_e) + log N_p(x; mu_x, Sigma_x),
/// f evaluated by routing `x` through the ensemble.
double log_full_conditional_x(std::span<const double> x, double y_i, std::span<const double> x_star_i,
                              std::span<const Tree> trees, const CutpointGrid& grid, double sigma2,
                              const HyperParams& hp);

/// Everything the latent sweep reads besides the state it writes.
struct LatentSweepInputs {
  const Matrix<double>& x_star;
  std::span<const double> target;  // rescaled y, or probit z
  std::span<const Tree> trees;
  const CutpointGrid& grid;
  double sigma2;
  const HyperParams& hp;
  std::uint64_t stream_seed;  // per chain
  std::uint64_t sweep;
};

/// Ensemble bookkeeping refreshed for observation i when its x_i moves.
struct EnsembleCache {
  std::vector<NodeAssignment>& assignments;  // one per tree
  std::span<double> fit;                     // sum of trees at the current latent x
};

/// Random-walk Metropolis update of every x_i with proposal
/// N_p(x_i, diag(proposal_sd^2)). Observation i draws from its own stream
/// derived from (stream_seed, sweep, i), so the result does not depend on
/// the number of threads. On acceptance, the leaf assignment of i in every
/// tree and fit[i] are refreshed.
void update_latent_x(LatentState& state, const LatentSweepInputs& in, EnsembleCache& cache);
/// Single-threaded reference for update_latent_x; bitwise identical output.
void update_latent_x_serial(LatentState& state, const LatentSweepInputs& in, EnsembleCache& cache);

}  // namespace mebart
