#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "mebart/experiment.hpp"
#include "mebart/sampler.hpp"
#include "mebart/synthetic.hpp"
#include "oracles.hpp"

using namespace mebart;

namespace {

SamplerConfig short_run(ModelKind m, int burn = 50, int keep = 100) {
  SamplerConfig c;
  c.model = m;
  c.n_burn = burn;
  c.n_keep = keep;
  c.seed = 17;
  return c;
}

ObservedDataset indicator_data(std::uint64_t seed, std::size_t n = 60) {
  ScenarioSpec s = ScenarioSpec::defaults(TrueFunction::indicator);
  s.n_train = n;
  s.n_test = 10;
  s.seed = seed;
  return generate(s).train.observed(s.sigma_e);
}

HyperOverrides small_ensemble(int m = 20) {
  HyperOverrides o;
  o.num_trees = m;
  return o;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("truncated normal: half-normal mean and tail stability") {
  Rng rng(1);
  const int n = 200000;
  double s = 0.0, t = 0.0;
  for (int k = 0; k < n; ++k) {
    const double z = sample_truncated_normal(0.0, true, rng);
    REQUIRE(z > 0.0);
    s += z;
    const double w = sample_truncated_normal(0.0, false, rng);
    REQUIRE(w <= 0.0);
    t += w;
  }
  const double se = std::sqrt(1.0 - 2.0 / std::numbers::pi) / std::sqrt(n);
  CHECK(std::abs(s / n - std::sqrt(2.0 / std::numbers::pi)) < 3.0 * se);
  CHECK(std::abs(t / n + std::sqrt(2.0 / std::numbers::pi)) < 3.0 * se);
  CHECK(std::sqrt(2.0 / std::numbers::pi) == doctest::Approx(0.7979).epsilon(1e-4));

  for (double mean : {-8.0, -30.0, -200.0}) {
    double acc = 0.0;
    for (int k = 0; k < 2000; ++k) {
      const double z = sample_truncated_normal(mean, true, rng);
      REQUIRE(z > 0.0);
      REQUIRE(std::isfinite(z));
      acc += z;
    }
    // Mean of N(mu,1) beyond 0 for mu << 0 is close to 1/|mu|.
    CHECK(acc / 2000 == doctest::Approx(1.0 / std::abs(mean)).epsilon(0.15));
  }
}

TEST_CASE("truncated normal matches its CDF") {
  Rng rng(2);
  const double mu = 0.7;
  std::vector<double> v(5000);
  for (auto& x : v) x = sample_truncated_normal(mu, false, rng);
  const double mass = oracle::normal_cdf(0.0, mu, 1.0);
  auto cdf = [&](double x) { return oracle::normal_cdf(std::min(x, 0.0), mu, 1.0) / mass; };
  CHECK(oracle::ks_pvalue(oracle::ks_statistic(v, cdf), v.size()) > 0.01);
}

TEST_CASE("intercept-only model recovers the response mean and sd") {
  Rng rng(3);
  ObservedDataset d;
  d.x_star = Matrix<double>(400, 1);
  d.y.resize(400);
  for (std::size_t i = 0; i < 400; ++i) {
    d.x_star(i, 0) = rng.normal();
    d.y[i] = 3.0 + 0.5 * rng.normal();
  }
  d.sigma_e = {0.1};
  HyperOverrides o = small_ensemble(1);
  o.min_leaf_size = 400;  // no split can leave both children populated
  const FitResult fit = fit_model(d, ModelKind::bart, o, short_run(ModelKind::bart, 100, 400));
  double s = 0.0;
  for (double v : fit.draws.sigma) s += v;
  const double sd_y = std::sqrt(sample_variance(d.y));
  CHECK(s / static_cast<double>(fit.draws.sigma.size()) == doctest::Approx(sd_y).epsilon(0.05));
  const auto mean_f = fit.draws.train_mean();
  double ybar = 0.0;
  for (double y : d.y) ybar += y;
  ybar /= 400.0;
  CHECK(mean_f[0] == doctest::Approx(ybar).epsilon(0.01));
  CHECK(mean_f[0] == mean_f[399]);
}

TEST_CASE("fixed seed gives identical draws across runs and thread counts") {
  const ObservedDataset d = indicator_data(4);
  SamplerConfig cfg = short_run(ModelKind::mebart);
  cfg.n_chains = 3;
  cfg.keep_trees = true;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  const FitResult a = fit_model(d, ModelKind::mebart, small_ensemble(), cfg);
  omp_set_num_threads(4);
  const FitResult b = fit_model(d, ModelKind::mebart, small_ensemble(), cfg);
  cfg.parallel_latent = false;
  const FitResult c = fit_model(d, ModelKind::mebart, small_ensemble(), cfg);
  omp_set_num_threads(saved);
  CHECK(a.draws.sigma == b.draws.sigma);
  CHECK(a.draws.train_f == b.draws.train_f);
  CHECK(a.draws.latent_x_mean == b.draws.latent_x_mean);
  CHECK(a.draws.sigma == c.draws.sigma);
  CHECK(a.draws.latent_x_mean == c.draws.latent_x_mean);
  CHECK(a.draws.num_draws() == 300);
  CHECK(a.draws.sigma.size() == 300);
  CHECK(a.draws.ensembles.size() == 300);
  CHECK(a.draws.sigma_trace.rows() == 150);
  CHECK(a.draws.sigma_trace.cols() == 3);

  cfg.seed = 18;
  const FitResult e = fit_model(d, ModelKind::mebart, small_ensemble(), cfg);
  CHECK(e.draws.sigma != a.draws.sigma);
}

TEST_CASE("mebart with a frozen latent step reproduces bart") {
  const ObservedDataset d = indicator_data(5);
  HyperOverrides o = small_ensemble();
  o.proposal_multiplier = 0.0;
  const FitResult me = fit_model(d, ModelKind::mebart, o, short_run(ModelKind::mebart));
  const FitResult bart = fit_model(d, ModelKind::bart, o, short_run(ModelKind::bart));
  CHECK(me.draws.sigma == bart.draws.sigma);
  CHECK(me.draws.train_f == bart.draws.train_f);
  CHECK(me.draws.latent_x_mean.values().size() == d.x_star.values().size());
}

TEST_CASE("internal invariants hold at every sweep") {
  const ObservedDataset d = indicator_data(6);
  SamplerConfig cfg = short_run(ModelKind::mebart, 30, 30);
  cfg.check_every = 1;
  CHECK_NOTHROW(fit_model(d, ModelKind::mebart, small_ensemble(), cfg));

  ObservedDataset b = d;
  for (std::size_t i = 0; i < b.n(); ++i) b.y[i] = b.x_star(i, 0) > 0 ? 1.0 : 0.0;
  b.binary = true;
  CHECK_NOTHROW(fit_model(b, ModelKind::mebart, small_ensemble(), cfg));
}

TEST_CASE("probit: all-ones labels drive probabilities towards one") {
  ObservedDataset d = indicator_data(7, 50);
  d.y.assign(d.n(), 1.0);
  d.binary = true;
  const FitResult fit = fit_model(d, ModelKind::bart, {}, short_run(ModelKind::bart, 100, 200));
  CHECK(fit.draws.response == ResponseKind::probit);
  CHECK(fit.draws.sigma.empty());
  for (double p : fit.draws.train_mean()) CHECK(p > 0.9);
}

TEST_CASE("probit: recovered probability curve crosses one half near the step") {
  Rng rng(8);
  ObservedDataset d;
  const std::size_t n = 400;
  d.x_star = Matrix<double>(n, 1);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 2.0 * rng.uniform() - 1.0;
    d.x_star(i, 0) = x;
    d.y[i] = rng.uniform() < phi(x < 0 ? -2.0 : 2.0) ? 1.0 : 0.0;
  }
  d.binary = true;
  d.sigma_e = {0.05};
  Matrix<double> grid(81, 1);
  for (std::size_t k = 0; k < 81; ++k) grid(k, 0) = -0.8 + 0.02 * static_cast<double>(k);
  for (ModelKind m : {ModelKind::bart, ModelKind::mebart}) {
    const FitResult fit = fit_model(d, m, {}, short_run(m, 200, 300), &grid);
    const auto p = fit.draws.test_mean();
    CHECK(p.front() < 0.2);
    CHECK(p.back() > 0.8);
    std::size_t cross = 0;
    while (cross < p.size() && p[cross] < 0.5) ++cross;
    REQUIRE(cross < p.size());
    CHECK(std::abs(grid(cross, 0)) <= 0.2);
  }
}

TEST_CASE("posterior contraction on a noiseless two-leaf step") {
  auto train_mse = [](std::size_t n) {
    Rng rng(9);
    ObservedDataset d;
    d.x_star = Matrix<double>(n, 1);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      d.x_star(i, 0) = rng.normal();
      d.y[i] = d.x_star(i, 0) < 0.0 ? 0.0 : 1.0;
    }
    d.sigma_e = {0.0};
    d.binary = false;  // treat as continuous
    HyperParams hp = derive_hyperparams(d, small_ensemble(50));
    SamplerConfig cfg = short_run(ModelKind::bart, 200, 300);
    const PosteriorDraws dr = run_sampler(d, hp, cfg);
    return mse(dr.train_mean(), d.y);
  };
  const double small = train_mse(50), large = train_mse(200);
  CHECK(large < small);
  CHECK(large < 0.01);
}

TEST_CASE("diagnostics") {
  SUBCASE("identical chains give a PSR of exactly one") {
    Rng rng(10);
    std::vector<double> c(500);
    for (auto& v : c) v = rng.normal();
    CHECK(potential_scale_reduction({c, c}) == 1.0);
    CHECK(potential_scale_reduction({c, c, c}) == 1.0);
  }
  SUBCASE("shifted chains are flagged") {
    Rng rng(11);
    std::vector<double> a(500), b(500);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal() + 3.0;
    CHECK(potential_scale_reduction({a, b}) > 1.5);
    CHECK(split_potential_scale_reduction({a, b}) > 1.5);
  }
  SUBCASE("white noise has an ESS close to its length") {
    Rng rng(12);
    std::vector<double> w(4000);
    for (auto& v : w) v = rng.normal();
    CHECK(effective_sample_size(w) == doctest::Approx(4000.0).epsilon(0.2));
    std::vector<double> ar(4000);
    double prev = 0.0;
    for (auto& v : ar) v = prev = 0.9 * prev + rng.normal();
    CHECK(effective_sample_size(ar) < 800.0);
  }
  SUBCASE("report from a sampler run") {
    const ObservedDataset d = indicator_data(13);
    SamplerConfig cfg = short_run(ModelKind::mebart, 20, 40);
    cfg.n_chains = 2;
    const FitResult fit = fit_model(d, ModelKind::mebart, small_ensemble(), cfg);
    const DiagnosticsReport rep = diagnostics(fit.draws);
    CHECK(rep.has_sigma);
    CHECK(rep.chain_means.size() == 2);
    CHECK(rep.psr >= 1.0);
    CHECK(rep.ess > 0.0);
    CHECK(rep.acceptance_mean > 0.0);
    CHECK(rep.acceptance_max <= 1.0);
    CHECK(rep.burn_in == 20);

    std::ostringstream trace;
    write_trace(trace, fit.draws);
    std::istringstream lines(trace.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "chain,iteration,sigma,burn_in");
    std::getline(lines, line);
    CHECK(line.rfind("0,0,", 0) == 0);
    CHECK(line.substr(line.size() - 2) == ",1");
    int rows = 1, burn = 0;
    while (std::getline(lines, line)) {
      ++rows;
      burn += line.back() == '1';
    }
    CHECK(rows == 2 * 60);
    CHECK(burn + 1 == 2 * 20);

    SamplerConfig tiny = short_run(ModelKind::bart, 5, 5);
    CHECK_THROWS(diagnostics(fit_model(d, ModelKind::bart, small_ensemble(), tiny).draws));
  }
}

TEST_CASE("sampler configuration and data checks") {
  SamplerConfig c;
  c.n_keep = 0;
  CHECK_THROWS(c.validate());
  c = SamplerConfig{};
  c.thin = 0;
  CHECK_THROWS(c.validate());

  ObservedDataset d = indicator_data(14);
  d.sigma_e.clear();
  CHECK_THROWS_AS(fit_model(d, ModelKind::mebart, small_ensemble(), short_run(ModelKind::mebart)), DataError);
  CHECK_NOTHROW(fit_model(d, ModelKind::bart, small_ensemble(), short_run(ModelKind::bart, 5, 5)));

  ObservedDataset few = indicator_data(15, 5);
  CHECK_THROWS_AS(fit_model(few, ModelKind::bart, small_ensemble(), short_run(ModelKind::bart)), DataError);
}
