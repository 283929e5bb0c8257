#include "mebart/priors.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>
#include <string>

namespace mebart {

double HyperParams::sigma_mu() const { return f_half_range / (k * std::sqrt(static_cast<double>(num_trees))); }

void HyperParams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("hyperparameters: " + what); };
  if (num_trees < 1) fail("num_trees must be >= 1");
  if (!(k > 0.0)) fail("k must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha must lie in (0, 1)");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must lie in (0, inf)");
  if (!(nu > 0.0)) fail("nu must be > 0");
  if (!(lambda > 0.0)) fail("lambda must be > 0");
  if (!(q > 0.0 && q < 1.0)) fail("q must lie in (0, 1)");
  if (n_cutpoints < 1) fail("n_cutpoints must be >= 1");
  if (min_leaf_size < 0) fail("min_leaf_size must be >= 0");
  const std::size_t p = mu_x.size();
  if (sigma_x2.size() != p || sigma_e2.size() != p || proposal_sd.size() != p) fail("per-variable vectors must share length");
  for (std::size_t j = 0; j < p; ++j) {
    if (!(sigma_x2[j] > 0.0)) fail("sigma_x2 entries must be > 0");
    if (!(sigma_e2[j] >= 0.0)) fail("sigma_e2 entries must be >= 0");
    if (!(proposal_sd[j] >= 0.0)) fail("proposal_sd entries must be >= 0");
  }
}

YScaler::YScaler(double y_min, double y_max) : y_min_(y_min), y_max_(y_max) {
  if (!(y_max > y_min)) throw DataError("response has zero range; cannot rescale");
}

YScaler YScaler::fit(std::span<const double> y) {
  if (y.empty()) throw DataError("empty response");
  double lo = y[0];
  double hi = y[0];
  for (double v : y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return YScaler(lo, hi);
}

double log_tree_structure_prior(const Tree& tree, const CutpointGrid& grid, const HyperParams& hp) {
  double out = 0.0;
  const double log_p = std::log(static_cast<double>(grid.num_vars()));
  for (std::int32_t id = 0; id < static_cast<std::int32_t>(tree.arena_size()); ++id) {
    const Node& nd = tree.node(id);
    if (nd.free) continue;
    const double split = hp.alpha * std::pow(1.0 + nd.depth, -hp.beta);
    if (nd.is_leaf()) {
      out += std::log1p(-split);
    } else {
      out += std::log(split) - log_p - std::log(static_cast<double>(grid.num_cuts(static_cast<std::size_t>(nd.var))));
    }
  }
  return out;
}

double log_grow_prior_ratio(int depth, std::size_t n_vars, int n_cuts, const HyperParams& hp) {
  const double split = hp.alpha * std::pow(1.0 + depth, -hp.beta);
  const double child_split = hp.alpha * std::pow(2.0 + depth, -hp.beta);
  return std::log(split) + 2.0 * std::log1p(-child_split) - std::log1p(-split) -
         std::log(static_cast<double>(n_vars)) - std::log(static_cast<double>(n_cuts));
}

std::vector<double> sample_leaf_values(const LeafStats& stats, double sigma2, const HyperParams& hp, Rng& rng) {
  const double prior_prec = 1.0 / hp.sigma_mu2();
  std::vector<double> mu(stats.leaves.size());
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double prec = prior_prec + static_cast<double>(stats.count[k]) / sigma2;
    const double mean = (stats.sum[k] / sigma2) / prec;
    mu[k] = mean + rng.normal() / std::sqrt(prec);
  }
  return mu;
}

double sample_sigma2(std::span<const double> residuals, const HyperParams& hp, Rng& rng) {
  double ss = 0.0;
  for (double r : residuals) ss += r * r;
  const double dof = hp.nu + static_cast<double>(residuals.size());
  return (hp.nu * hp.lambda + ss) / rng.chi_square(dof);
}

double calibrate_lambda_from_variance(double sigma_hat2, double nu, double q) {
  if (!(sigma_hat2 > 0.0) || !std::isfinite(sigma_hat2)) throw DataError("response variance is zero or non-finite; cannot calibrate the sigma prior");
  boost::math::chi_squared chi(nu);
  return sigma_hat2 * boost::math::quantile(chi, 1.0 - q) / nu;
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double calibrate_lambda(std::span<const double> y, double nu, double q) {
  if (y.size() < 2) throw DataError("need at least two responses to calibrate the sigma prior");
  return calibrate_lambda_from_variance(sample_variance(y), nu, q);
}

double least_squares_residual_variance(const Matrix<double>& x, std::span<const double> y) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto p = static_cast<Eigen::Index>(x.cols());
  if (n <= p + 1) throw DataError("too few observations for a least-squares variance estimate");
  Eigen::MatrixXd design(n, p + 1);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < p; ++j) design(i, j + 1) = x(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    target(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(target);
  const Eigen::VectorXd resid = target - design * beta;
  return resid.squaredNorm() / static_cast<double>(n - p - 1);
}

double log_latent_x_prior(std::span<const double> x, const HyperParams& hp) {
  double out = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - hp.mu_x[j];
    out += -0.5 * std::log(2.0 * std::numbers::pi * hp.sigma_x2[j]) - 0.5 * d * d / hp.sigma_x2[j];
  }
  return out;
}

HyperParams derive_hyperparams(const ObservedDataset& data, const HyperOverrides& ov) {
  HyperParams hp;
  if (ov.num_trees) hp.num_trees = *ov.num_trees;
  if (ov.k) hp.k = *ov.k;
  if (ov.alpha) hp.alpha = *ov.alpha;
  if (ov.beta) hp.beta = *ov.beta;
  if (ov.nu) hp.nu = *ov.nu;
  if (ov.q) hp.q = *ov.q;
  if (ov.n_cutpoints) hp.n_cutpoints = *ov.n_cutpoints;
  if (ov.min_leaf_size) hp.min_leaf_size = *ov.min_leaf_size;
  if (data.binary) hp.f_half_range = 3.0;

  const std::size_t p = data.p();
  hp.sigma_e2.assign(p, 0.0);
  for (std::size_t j = 0; j < p && j < data.sigma_e.size(); ++j) hp.sigma_e2[j] = data.sigma_e[j] * data.sigma_e[j];

  if (ov.lambda) {
    hp.lambda = *ov.lambda;
  } else if (!data.binary) {
    const YScaler scaler = YScaler::fit(data.y);
    std::vector<double> z(data.y.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = scaler.forward(data.y[i]);
    // Least squares needs more rows than coefficients; fall back to var(y).
    const bool ls = ov.sigma_hat == SigmaHatSource::least_squares && data.n() > p + 1;
    const double sigma_hat2 = ls ? least_squares_residual_variance(data.x_star, z) : sample_variance(z);
    hp.lambda = calibrate_lambda_from_variance(sigma_hat2, hp.nu, hp.q);
  }

  hp.mu_x.assign(p, 0.0);
  hp.sigma_x2.assign(p, 1.0);
  std::vector<double> col(data.n());
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < data.n(); ++i) col[i] = data.x_star(i, j);
    double mean = 0.0;
    for (double v : col) mean += v;
    hp.mu_x[j] = col.empty() ? 0.0 : mean / static_cast<double>(col.size());
    const double var = sample_variance(col);
    const double est = std::max(var - hp.sigma_e2[j], 0.01 * var);
    hp.sigma_x2[j] = est > 0.0 ? est : 1.0;
  }
  auto broadcast = [p](const std::vector<double>& v) { return v.size() == 1 ? std::vector<double>(p, v[0]) : v; };
  if (ov.mu_x) hp.mu_x = broadcast(*ov.mu_x);
  if (ov.sigma_x2) hp.sigma_x2 = broadcast(*ov.sigma_x2);
  if (hp.mu_x.size() != p || hp.sigma_x2.size() != p)
    throw std::invalid_argument("mu_x and sigma_x2 overrides need one value or one per predictor");

  hp.proposal_sd.resize(p);
  for (std::size_t j = 0; j < p; ++j) hp.proposal_sd[j] = ov.proposal_multiplier * std::sqrt(hp.sigma_e2[j]);

  hp.validate();
  return hp;
}

}  // namespace mebart
