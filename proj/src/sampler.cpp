#include "mebart/sampler.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <exception>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mebart {

std::string to_string(ModelKind m) { return m == ModelKind::bart ? "bart" : "mebart"; }
std::string to_string(ResponseKind r) { return r == ResponseKind::continuous ? "continuous" : "probit"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "bart") return ModelKind::bart;
  if (s == "mebart") return ModelKind::mebart;
  throw std::invalid_argument("unknown method '" + s + "' (expected bart or mebart)");
}

void SamplerConfig::validate() const {
  if (n_burn < 0) throw std::invalid_argument("sampler: n_burn must be >= 0");
  if (n_keep < 1) throw std::invalid_argument("sampler: n_keep must be >= 1");
  if (thin < 1) throw std::invalid_argument("sampler: thin must be >= 1");
  if (n_chains < 1) throw std::invalid_argument("sampler: n_chains must be >= 1");
  if (check_every < 0) throw std::invalid_argument("sampler: check_every must be >= 0");
}

namespace {

std::vector<double> column_means(const Matrix<double>& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t d = 0; d < m.rows(); ++d)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(d, j);
  for (double& v : out) v /= static_cast<double>(std::max<std::size_t>(m.rows(), 1));
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Rows of `cells` collapsed to distinct cell signatures: points sharing a
// signature route identically through every tree on the grid.
struct CompressedPoints {
  Matrix<Cell> unique;
  std::vector<std::size_t> index;  // row -> unique row

  static CompressedPoints build(const Matrix<Cell>& cells) {
    CompressedPoints cp;
    std::map<std::vector<Cell>, std::size_t> seen;
    std::vector<std::vector<Cell>> rows;
    cp.index.resize(cells.rows());
    for (std::size_t i = 0; i < cells.rows(); ++i) {
      std::vector<Cell> key(cells.row(i).begin(), cells.row(i).end());
      auto [it, inserted] = seen.emplace(key, rows.size());
      if (inserted) rows.push_back(std::move(key));
      cp.index[i] = it->second;
    }
    cp.unique = Matrix<Cell>(rows.size(), cells.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), cp.unique.row(r).begin());
    return cp;
  }
};

class Chain {
 public:
  Chain(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg, std::uint64_t seed,
        const Matrix<double>* test_x)
      : data_(data), hp_(hp), cfg_(cfg), probit_(cfg.response == ResponseKind::probit), seed_(seed), rng_(seed) {
    const std::size_t n = data.n();
    grid_ = make_grid(data, hp);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < data.p(); ++j) {
        if (!std::isfinite(data.x_star(i, j))) {
          std::ostringstream msg;
          msg << "non-finite predictor at observation " << i << ", column " << j;
          throw SamplerError(msg.str());
        }
      }
      if (!std::isfinite(data.y[i])) {
        std::ostringstream msg;
        msg << "non-finite response at observation " << i;
        throw SamplerError(msg.str());
      }
    }
    target_.resize(n);
    if (probit_) {
      for (std::size_t i = 0; i < n; ++i) {
        if (data.y[i] != 0.0 && data.y[i] != 1.0) {
          std::ostringstream msg;
          msg << "probit response must be 0 or 1; observation " << i << " is " << data.y[i];
          throw DataError(msg.str());
        }
      }
      sigma2_ = 1.0;
    } else {
      scaler_ = YScaler::fit(data.y);
      for (std::size_t i = 0; i < n; ++i) target_[i] = scaler_.forward(data.y[i]);
      sigma2_ = sample_variance(target_);
      if (!(sigma2_ > 0.0)) throw DataError("response has zero variance");
    }
    latent_ = LatentState::initialize(data.x_star, grid_);
    star_cells_ = latent_.cells;
    trees_.assign(static_cast<std::size_t>(hp.num_trees), Tree(0.0));
    assign_.reserve(trees_.size());
    for (const Tree& t : trees_) assign_.push_back(NodeAssignment::from_cells(t, latent_.cells));
    fit_.assign(n, 0.0);
    partial_.resize(n);
    old_.resize(n);
    if (test_x) test_points_ = CompressedPoints::build(grid_.cells(*test_x));
    test_buf_.resize(test_points_.unique.rows());
    star_buf_.resize(n);
  }

  PosteriorDraws run() {
    const std::size_t n = data_.n();
    const std::size_t p = data_.p();
    const int total = cfg_.n_burn + cfg_.n_keep * cfg_.thin;

    PosteriorDraws out;
    out.model = cfg_.model;
    out.response = cfg_.response;
    out.n_chains = 1;
    out.n_keep = cfg_.n_keep;
    out.n_burn = cfg_.n_burn;
    out.thin = cfg_.thin;
    out.grid = grid_;
    out.scaler = scaler_;
    const auto keep = static_cast<std::size_t>(cfg_.n_keep);
    if (!probit_) {
      out.sigma.reserve(keep);
      out.sigma_trace = Matrix<double>(static_cast<std::size_t>(total), 1);
    }
    out.train_f = Matrix<double>(keep, n);
    out.test_f = Matrix<double>(keep, test_points_.index.size());
    out.latent_x_mean = Matrix<double>(n, p, 0.0);

    std::size_t kept = 0;
    for (int it = 0; it < total; ++it) {
      sweep(static_cast<std::uint64_t>(it));
      if (!probit_) out.sigma_trace(static_cast<std::size_t>(it), 0) = scaler_.scale_to_response(std::sqrt(sigma2_));
      if (cfg_.check_every > 0 && (it + 1) % cfg_.check_every == 0) check_invariants();
      if (it < cfg_.n_burn || (it - cfg_.n_burn + 1) % cfg_.thin != 0) continue;
      record(out, kept++);
    }
    for (double& v : out.latent_x_mean.values()) v /= static_cast<double>(keep);
    out.accepted = latent_.accepted;
    out.proposed = latent_.proposed;
    return out;
  }

 private:
  void sweep(std::uint64_t it) {
    const std::size_t n = data_.n();
    if (probit_) {
      for (std::size_t i = 0; i < n; ++i) target_[i] = sample_truncated_normal(fit_[i], data_.y[i] == 1.0, rng_);
    }
    for (std::size_t h = 0; h < trees_.size(); ++h) {
      Tree& tree = trees_[h];
      NodeAssignment& assign = assign_[h];
      for (std::size_t i = 0; i < n; ++i) {
        old_[i] = tree.node(assign.leaf_of[i]).mu;
        partial_[i] = target_[i] - fit_[i] + old_[i];
      }
      update_tree_structure(tree, assign, partial_, latent_.cells, grid_, sigma2_, hp_, rng_);
      const LeafStats stats = LeafStats::collect(tree, assign, partial_);
      const std::vector<double> mu = sample_leaf_values(stats, sigma2_, hp_, rng_);
      for (std::size_t k = 0; k < mu.size(); ++k) tree.set_mu(stats.leaves[k], mu[k]);
      for (std::size_t i = 0; i < n; ++i) fit_[i] += tree.node(assign.leaf_of[i]).mu - old_[i];
    }
    refresh_fit();

    if (!probit_) {
      for (std::size_t i = 0; i < n; ++i) partial_[i] = target_[i] - fit_[i];
      sigma2_ = sample_sigma2(partial_, hp_, rng_);
      if (!std::isfinite(sigma2_) || !(sigma2_ > 0.0)) throw SamplerError("sigma^2 draw is not a positive finite number");
    }

    if (cfg_.model == ModelKind::mebart) {
      LatentSweepInputs in{data_.x_star, target_, trees_, grid_, sigma2_, hp_, derive_seed(seed_, 0x1a7e47), it};
      EnsembleCache cache{assign_, fit_};
      if (cfg_.parallel_latent) {
        update_latent_x(latent_, in, cache);
      } else {
        update_latent_x_serial(latent_, in, cache);
      }
    }
  }

  // Recomputes the ensemble fit from the assignments in a fixed summation
  // order, the same order the latent kernel uses for proposals.
  void refresh_fit() {
    std::fill(fit_.begin(), fit_.end(), 0.0);
    for (std::size_t i = 0; i < fit_.size(); ++i) {
      double f = 0.0;
      for (std::size_t h = 0; h < trees_.size(); ++h) f += trees_[h].node(assign_[h].leaf_of[i]).mu;
      fit_[i] = f;
    }
  }

  double to_response(double f) const { return probit_ ? normal_cdf(f) : scaler_.inverse(f); }

  void record(PosteriorDraws& out, std::size_t d) {
    const std::size_t n = data_.n();
    if (!probit_) out.sigma.push_back(scaler_.scale_to_response(std::sqrt(sigma2_)));
    if (cfg_.model == ModelKind::bart) {
      std::copy(fit_.begin(), fit_.end(), star_buf_.begin());
    } else {
      evaluate_rows(trees_, star_cells_, star_buf_);
    }
    for (std::size_t i = 0; i < n; ++i) out.train_f(d, i) = to_response(star_buf_[i]);
    if (!test_points_.index.empty()) {
      evaluate_rows(trees_, test_points_.unique, test_buf_);
      for (std::size_t i = 0; i < test_points_.index.size(); ++i) out.test_f(d, i) = to_response(test_buf_[test_points_.index[i]]);
    }
    for (std::size_t k = 0; k < out.latent_x_mean.values().size(); ++k) out.latent_x_mean.values()[k] += latent_.x.values()[k];
    if (cfg_.keep_latent_draws) out.latent_x.push_back(latent_.x);
    if (cfg_.keep_trees) out.ensembles.push_back(trees_);
  }

  void check_invariants() const {
    for (std::size_t h = 0; h < trees_.size(); ++h) {
      if (!(NodeAssignment::from_cells(trees_[h], latent_.cells) == assign_[h]))
        throw std::logic_error("leaf assignment of tree " + std::to_string(h) + " is stale");
    }
    for (std::size_t i = 0; i < fit_.size(); ++i) {
      const double direct = evaluate_ensemble_cells(trees_, latent_.cells.row(i));
      if (std::abs(direct - fit_[i]) > 1e-10) throw std::logic_error("residual identity violated at observation " + std::to_string(i));
    }
    if (probit_) {
      for (std::size_t i = 0; i < target_.size(); ++i)
        if ((target_[i] > 0.0) != (data_.y[i] == 1.0)) throw std::logic_error("probit latent sign mismatch at observation " + std::to_string(i));
    }
  }

  const ObservedDataset& data_;
  const HyperParams& hp_;
  const SamplerConfig& cfg_;
  bool probit_;
  std::uint64_t seed_;
  Rng rng_;
  CutpointGrid grid_;
  YScaler scaler_;
  std::vector<double> target_;
  double sigma2_ = 1.0;
  LatentState latent_;
  Matrix<Cell> star_cells_;
  std::vector<Tree> trees_;
  std::vector<NodeAssignment> assign_;
  std::vector<double> fit_;
  std::vector<double> partial_;
  std::vector<double> old_;
  CompressedPoints test_points_;
  std::vector<double> test_buf_;
  std::vector<double> star_buf_;
};

void check_modes(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg) {
  cfg.validate();
  hp.validate();
  if (hp.mu_x.size() != data.p()) throw std::invalid_argument("hyperparameters do not match the number of predictors");
  if (data.y.size() != data.n()) throw DataError("response length does not match predictor rows");
  if (cfg.model == ModelKind::mebart) {
    for (std::size_t j = 0; j < data.p(); ++j)
      if (!(hp.sigma_e2[j] > 0.0)) throw DataError("mebart needs a positive measurement-error sd for column " + std::to_string(j));
  }
}

}  // namespace

std::vector<double> PosteriorDraws::train_mean() const { return column_means(train_f); }
std::vector<double> PosteriorDraws::test_mean() const { return column_means(test_f); }

std::vector<double> PosteriorDraws::predict(std::size_t d, const Matrix<double>& x_star) const {
  if (d >= ensembles.size()) throw std::out_of_range("predict: draw has no stored ensemble");
  const Matrix<Cell> cells = grid.cells(x_star);
  std::vector<double> f(x_star.rows());
  evaluate_rows(ensembles[d], cells, f);
  for (double& v : f) v = response == ResponseKind::probit ? normal_cdf(v) : scaler.inverse(v);
  return f;
}

CutpointGrid make_grid(const ObservedDataset& data, const HyperParams& hp) {
  std::vector<double> sd(hp.sigma_e2.size());
  for (std::size_t j = 0; j < sd.size(); ++j) sd[j] = std::sqrt(hp.sigma_e2[j]);
  return CutpointGrid::expanded(data.x_star, sd, hp.n_cutpoints);
}

PosteriorDraws run_chain(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg,
                         std::uint64_t chain_seed, const Matrix<double>* test_x) {
  check_modes(data, hp, cfg);
  if (cfg.response != ResponseKind::continuous) throw std::invalid_argument("run_chain: use run_probit_chain for binary responses");
  return Chain(data, hp, cfg, chain_seed, test_x).run();
}

PosteriorDraws run_probit_chain(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg,
                                std::uint64_t chain_seed, const Matrix<double>* test_x) {
  check_modes(data, hp, cfg);
  if (cfg.response != ResponseKind::probit) throw std::invalid_argument("run_probit_chain: config response must be probit");
  return Chain(data, hp, cfg, chain_seed, test_x).run();
}

PosteriorDraws run_sampler(const ObservedDataset& data, const HyperParams& hp, const SamplerConfig& cfg,
                           const Matrix<double>* test_x) {
  check_modes(data, hp, cfg);
  const auto chains = static_cast<std::size_t>(cfg.n_chains);
  std::vector<PosteriorDraws> parts(chains);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chains); ++c) {
    try {
      parts[static_cast<std::size_t>(c)] = Chain(data, hp, cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(c)), test_x).run();
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  if (chains == 1) return std::move(parts[0]);

  PosteriorDraws out = std::move(parts[0]);
  const std::size_t keep = static_cast<std::size_t>(cfg.n_keep);
  const std::size_t total_rows = out.sigma_trace.rows();
  Matrix<double> trace(total_rows, out.response == ResponseKind::probit ? 0 : chains);
  Matrix<double> train(keep * chains, out.train_f.cols());
  Matrix<double> test(keep * chains, out.test_f.cols());
  for (std::size_t c = 0; c < chains; ++c) {
    const PosteriorDraws& part = c == 0 ? out : parts[c];
    for (std::size_t r = 0; r < trace.rows() && trace.cols() > 0; ++r) trace(r, c) = part.sigma_trace(r, 0);
    for (std::size_t d = 0; d < keep; ++d) {
      std::copy(part.train_f.row(d).begin(), part.train_f.row(d).end(), train.row(c * keep + d).begin());
      std::copy(part.test_f.row(d).begin(), part.test_f.row(d).end(), test.row(c * keep + d).begin());
    }
    if (c == 0) continue;
    out.sigma.insert(out.sigma.end(), part.sigma.begin(), part.sigma.end());
    for (std::size_t k = 0; k < out.latent_x_mean.values().size(); ++k) out.latent_x_mean.values()[k] += part.latent_x_mean.values()[k];
    for (std::size_t i = 0; i < out.accepted.size(); ++i) {
      out.accepted[i] += part.accepted[i];
      out.proposed[i] += part.proposed[i];
    }
    out.latent_x.insert(out.latent_x.end(), part.latent_x.begin(), part.latent_x.end());
    out.ensembles.insert(out.ensembles.end(), part.ensembles.begin(), part.ensembles.end());
  }
  for (double& v : out.latent_x_mean.values()) v /= static_cast<double>(chains);
  out.sigma_trace = std::move(trace);
  out.train_f = std::move(train);
  out.test_f = std::move(test);
  out.n_chains = cfg.n_chains;
  return out;
}

double sample_truncated_normal(double mean, bool positive, Rng& rng) {
  // Draw w ~ N(0,1) restricted to w >= a, then map back: for the positive
  // side z = mean + w with a = -mean, otherwise z = mean - w with a = mean.
  const double a = positive ? -mean : mean;
  double w;
  if (a < 25.0) {
    // Inverse CDF on the upper tail: P(W >= w) = u * P(W >= a).
    do {
      const double u = 1.0 - rng.uniform();
      w = std::numbers::sqrt2 * boost::math::erfc_inv(u * std::erfc(a / std::numbers::sqrt2));
    } while (!std::isfinite(w) || w < a || (w == a && positive));
  } else {
    // Far tail: exponential rejection sampler.
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    do {
      w = a - std::log(1.0 - rng.uniform()) / rate;
    } while (rng.uniform() > std::exp(-0.5 * (w - rate) * (w - rate)));
  }
  return positive ? mean + w : mean - w;
}

}  // namespace mebart
