#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mebart/data.hpp"
#include "mebart/rng.hpp"
#include "mebart/tree.hpp"

namespace mebart {

/// How the reference variance used to calibrate the sigma^2 prior is obtained.
enum class SigmaHatSource { sample_variance, least_squares };

/// Prior constants for trees, leaves, the error variance and the latent
/// predictors. Variances are in model units: rescaled response, raw X.
struct HyperParams {
  int num_trees = 200;
  double k = 2.0;
  double alpha = 0.95;
  double beta = 2.0;
  double nu = 3.0;
  double lambda = 1.0;
  double q = 0.90;
  int n_cutpoints = 100;
  int min_leaf_size = 1;
  /// Half-range of f the leaf prior targets: 0.5 for the rescaled response,
  /// 3 on the probit latent scale.
  double f_half_range = 0.5;
  std::vector<double> mu_x;
  std::vector<double> sigma_x2;
  std::vector<double> sigma_e2;
  /// Random-walk standard deviation per coordinate for latent-X proposals.
  std::vector<double> proposal_sd;

  /// Leaf prior standard deviation f_half_range / (k sqrt(m)).
  double sigma_mu() const;
  double sigma_mu2() const { return sigma_mu() * sigma_mu(); }

  /// Throws std::invalid_argument when a constant is out of its domain.
  void validate() const;
};

/// Affine map of the training response range onto [-0.5, 0.5].
class YScaler {
 public:
  YScaler() = default;
  YScaler(double y_min, double y_max);
  static YScaler fit(std::span<const double> y);

  double forward(double y) const { return (y - y_min_) / range() - 0.5; }
  double inverse(double z) const { return (z + 0.5) * range() + y_min_; }
  /// Converts a scale (sd) from model units to response units.
  double scale_to_response(double s) const { return s * range(); }

  double y_min() const { return y_min_; }
  double y_max() const { return y_max_; }
  double range() const { return y_max_ - y_min_; }

 private:
  double y_min_ = -0.5;
  double y_max_ = 0.5;
};

/// log of prod_internal alpha(1+d)^-beta * prod_leaf (1 - alpha(1+d)^-beta)
///        * prod_internal 1/(p * n_cuts(var)).
double log_tree_structure_prior(const Tree& tree, const CutpointGrid& grid, const HyperParams& hp);

/// log prior(grown) - log prior(original) for splitting a leaf at `depth` on
/// a variable with `n_cuts` candidate cutpoints.
double log_grow_prior_ratio(int depth, std::size_t n_vars, int n_cuts, const HyperParams& hp);

/// Conjugate N(0, sigma_mu^2) leaf updates; one draw per leaf in `stats` order.
/// Empty leaves draw from the prior.
std::vector<double> sample_leaf_values(const LeafStats& stats, double sigma2, const HyperParams& hp, Rng& rng);

/// sigma^2 | r ~ InvGamma((nu + n)/2, (nu lambda + sum r^2)/2).
double sample_sigma2(std::span<const double> residuals, const HyperParams& hp, Rng& rng);

/// lambda with P(sigma^2 < sigma_hat2) = q under sigma^2 ~ nu lambda / chi2_nu.
double calibrate_lambda_from_variance(double sigma_hat2, double nu, double q);
/// Same, with sigma_hat2 the sample variance of `y`. Throws DataError for a
/// constant response.
double calibrate_lambda(std::span<const double> y, double nu, double q);

/// Residual variance of an ordinary least-squares fit of y on [1, X].
double least_squares_residual_variance(const Matrix<double>& x, std::span<const double> y);

/// Log density of the diagonal normal prior N_p(mu_x, diag(sigma_x2)).
double log_latent_x_prior(std::span<const double> x, const HyperParams& hp);

/// Sample variance with denominator n - 1.
double sample_variance(std::span<const double> v);

/// User-facing overrides; unset fields are derived from the data.
struct HyperOverrides {
  std::optional<int> num_trees;
  std::optional<double> k, alpha, beta, nu, q, lambda;
  std::optional<int> n_cutpoints;
  std::optional<int> min_leaf_size;
  SigmaHatSource sigma_hat = SigmaHatSource::least_squares;
  std::optional<std::vector<double>> mu_x;
  std::optional<std::vector<double>> sigma_x2;
  double proposal_multiplier = 1.0;
};

/// Fills data-driven constants: lambda from the rescaled response, empirical
/// Bayes mu_x and sigma_x2 from X* (sigma_x2 = max(var - sigma_e^2, 0.01 var)),
/// sigma_e2 from the dataset, proposal sd = multiplier * sigma_e.
HyperParams derive_hyperparams(const ObservedDataset& data, const HyperOverrides& overrides);

}  // namespace mebart
