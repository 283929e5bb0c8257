#include "mebart/latent.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mebart/rng.hpp"

namespace mebart {

LatentState LatentState::initialize(const Matrix<double>& x_star, const CutpointGrid& grid) {
  LatentState s;
  s.x = x_star;
  s.cells = grid.cells(x_star);
  s.accepted.assign(x_star.rows(), 0);
  s.proposed.assign(x_star.rows(), 0);
  return s;
}

double log_full_conditional_x(std::span<const double> x, double y_i, std::span<const double> x_star_i,
                              std::span<const Tree> trees, const CutpointGrid& grid, double sigma2,
                              const HyperParams& hp) {
  const double f = evaluate_ensemble(trees, grid, x);
  const double ry = y_i - f;
  double out = -0.5 * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * ry * ry / sigma2;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x_star_i[j] - x[j];
    out += -0.5 * std::log(2.0 * std::numbers::pi * hp.sigma_e2[j]) - 0.5 * d * d / hp.sigma_e2[j];
  }
  return out + log_latent_x_prior(x, hp);
}

namespace {

struct Scratch {
  std::vector<double> x;
  std::vector<Cell> cells;
  std::vector<std::int32_t> leaves;
};

// Terms of the log full conditional that depend on x, without normalizers.
double log_target_kernel(std::span<const double> x, double f, double y, std::span<const double> x_star, double sigma2,
                         const HyperParams& hp) {
  const double ry = y - f;
  double out = -0.5 * ry * ry / sigma2;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double de = x_star[j] - x[j];
    const double dx = x[j] - hp.mu_x[j];
    out -= 0.5 * (de * de / hp.sigma_e2[j] + dx * dx / hp.sigma_x2[j]);
  }
  return out;
}

void update_one(std::size_t i, LatentState& state, const LatentSweepInputs& in, EnsembleCache& cache, Scratch& s) {
  const std::size_t p = state.x.cols();
  const auto cur = state.x.row(i);
  const auto x_star = in.x_star.row(i);
  Rng rng(derive_seed(in.stream_seed, in.sweep, i));

  for (std::size_t j = 0; j < p; ++j) s.x[j] = cur[j] + in.hp.proposal_sd[j] * rng.normal();
  const double u = rng.uniform();
  in.grid.cells(s.x, s.cells);

  double f_new = 0.0;
  for (std::size_t h = 0; h < in.trees.size(); ++h) {
    const std::int32_t leaf = in.trees[h].find_leaf(s.cells);
    s.leaves[h] = leaf;
    f_new += in.trees[h].node(leaf).mu;
  }
  const double y = in.target[i];
  const double log_new = log_target_kernel(s.x, f_new, y, x_star, in.sigma2, in.hp);
  const double log_cur = log_target_kernel(cur, cache.fit[i], y, x_star, in.sigma2, in.hp);
  const double log_ratio = log_new - log_cur;
  if (std::isnan(log_ratio)) {
    std::ostringstream msg;
    msg << "latent-x update: non-finite full conditional at observation " << i;
    throw SamplerError(msg.str());
  }
  ++state.proposed[i];
  if (std::log(u) < log_ratio) {
    ++state.accepted[i];
    for (std::size_t j = 0; j < p; ++j) {
      cur[j] = s.x[j];
      state.cells(i, j) = s.cells[j];
    }
    for (std::size_t h = 0; h < in.trees.size(); ++h) cache.assignments[h].leaf_of[i] = s.leaves[h];
    cache.fit[i] = f_new;
  }
}

Scratch make_scratch(const LatentState& state, const LatentSweepInputs& in) {
  return Scratch{std::vector<double>(state.x.cols()), std::vector<Cell>(state.x.cols()),
                 std::vector<std::int32_t>(in.trees.size())};
}

}  // namespace

void update_latent_x(LatentState& state, const LatentSweepInputs& in, EnsembleCache& cache) {
  const auto n = static_cast<std::int64_t>(state.x.rows());
  std::exception_ptr error;
#pragma omp parallel
  {
    Scratch s = make_scratch(state, in);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        update_one(static_cast<std::size_t>(i), state, in, cache, s);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

void update_latent_x_serial(LatentState& state, const LatentSweepInputs& in, EnsembleCache& cache) {
  Scratch s = make_scratch(state, in);
  for (std::size_t i = 0; i < state.x.rows(); ++i) update_one(i, state, in, cache, s);
}

}  // namespace mebart
