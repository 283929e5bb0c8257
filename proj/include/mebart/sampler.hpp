#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mebart/data.hpp"
#include "mebart/latent.hpp"
#include "mebart/priors.hpp"
#include "mebart/tree.hpp"

namespace mebart {

enum class ModelKind { bart, mebart };
enum class ResponseKind { continuous, probit };

std::string to_string(ModelKind m);
std::string to_string(ResponseKind r);
ModelKind parse_model_kind(const std::string& s);

struct SamplerConfig {
  ModelKind model = ModelKind::mebart;
  ResponseKind response = ResponseKind::continuous;
  int n_burn = 200;
  int n_keep = 1000;
  int thin = 1;
  int n_chains = 1;
  std::uint64_t seed = 1;
  /// Keep every retained ensemble (needed by `predict`).
  bool keep_trees = false;
  /// Keep every retained latent-X matrix; the posterior mean is always kept.
  bool keep_latent_draws = false;
  /// Run the internal consistency checks every this many sweeps (0 = never).
  int check_every = 0;
  /// Use the OpenMP latent-X kernel rather than the serial reference.
  bool parallel_latent = true;

  void validate() const;
};

/// Posterior output of one or more chains; chains are concatenated in order.
/// Function values are in response units (probabilities in probit mode).
struct PosteriorDraws {
  ModelKind model = ModelKind::mebart;
  ResponseKind response = ResponseKind::continuous;
  int n_chains = 1;
  int n_keep = 0;  // per chain
  int n_burn = 0;
  int thin = 1;

  std::vector<double> sigma;    // kept sigma draws (empty in probit mode)
  Matrix<double> sigma_trace;   // every sweep x chain, burn-in included
  Matrix<double> train_f;       // draws x n, ensemble at the observed X*
  Matrix<double> test_f;        // draws x n_test
  Matrix<double> latent_x_mean;  // n x p
  std::vector<Matrix<double>> latent_x;  // optional per draw
  std::vector<std::uint64_t> accepted;
  std::vector<std::uint64_t> proposed;
  std::vector<std::vector<Tree>> ensembles;  // optional per draw, model units

  CutpointGrid grid;
  YScaler scaler;

  std::size_t num_draws() const { return static_cast<std::size_t>(n_keep) * static_cast<std::size_t>(n_chains); }
  /// Posterior mean of train_f / test_f per column.
  std::vector<double> train_mean() const;
  std::vector<double> test_mean() const;
  /// Ensemble output of draw `d` at `x_star` (response units, probabilities
  /// for probit). Requires keep_trees.
  std::vector<double> predict(std::size_t d, const Matrix<double>& x_star) const;
};

/// Cutpoint grid shared by every method fitted on `data`.
CutpointGrid make_grid(const ObservedDataset& data, const HyperParams& hp);

/// One continuous-response chain. Sweep: for each tree, structure MH on the
/// partial residual then conjugate leaf draws; sigma^2 draw; latent-X sweep
/// (mebart only). Keeps every thin-th sweep after burn-in.
PosteriorDraws run_chain(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg,
                         std::uint64_t chain_seed, const Matrix<double>* test_x = nullptr);

/// One binary-response chain via truncated-normal data augmentation with the
/// error variance fixed at 1.
PosteriorDraws run_probit_chain(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg,
                                std::uint64_t chain_seed, const Matrix<double>* test_x = nullptr);

/// Runs cfg.n_chains chains in parallel (seeded from cfg.seed) and concatenates.
PosteriorDraws run_sampler(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg,
                           const Matrix<double>* test_x = nullptr);

/// Draw from N(mean, 1) truncated to (0, inf) when `positive`, else (-inf, 0].
double sample_truncated_normal(double mean, bool positive, Rng& rng);

struct DiagnosticsReport {
  bool has_sigma = false;
  std::vector<double> chain_means;
  double psr = 1.0;        // unsplit, over chains (needs >= 2 chains)
  double split_psr = 1.0;  // each chain split in halves
  double ess = 0.0;
  double acceptance_mean = 0.0;
  double acceptance_min = 0.0;
  double acceptance_max = 0.0;
  int burn_in = 0;
};

DiagnosticsReport diagnostics(const PosteriorDraws& draws);

/// sqrt((W + B) / W) with W the mean within-chain variance and B the variance
/// of chain means (both with population denominators). Exactly 1 when all
/// chain means agree.
double potential_scale_reduction(const std::vector<std::vector<double>>& chains);
/// Same statistic applied after splitting every chain into two halves.
double split_potential_scale_reduction(const std::vector<std::vector<double>>& chains);
/// Geyer initial-monotone-sequence effective sample size of one series.
double effective_sample_size(std::span<const double> series);

}  // namespace mebart
