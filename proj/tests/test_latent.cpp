#include <doctest.h>
#include <omp.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>

#include "mebart/latent.hpp"
#include "oracles.hpp"

using namespace mebart;

namespace {

HyperParams one_d(double mu_x, double sigma_x, double sigma_e) {
  HyperParams hp;
  hp.mu_x = {mu_x};
  hp.sigma_x2 = {sigma_x * sigma_x};
  hp.sigma_e2 = {sigma_e * sigma_e};
  hp.proposal_sd = {sigma_e};
  return hp;
}

double log_normal(double x, double m, double v) { return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * (x - m) * (x - m) / v; }

struct Fixture {
  Matrix<double> x_star;
  std::vector<double> target;
  std::vector<Tree> trees;
  CutpointGrid grid;
  HyperParams hp;
  std::vector<NodeAssignment> assign;
  std::vector<double> fit;
  LatentState state;

  void reset() {
    state = LatentState::initialize(x_star, grid);
    assign.clear();
    for (const Tree& t : trees) assign.push_back(NodeAssignment::from_cells(t, state.cells));
    fit.assign(x_star.rows(), 0.0);
    for (std::size_t i = 0; i < fit.size(); ++i) fit[i] = evaluate_ensemble_cells(trees, state.cells.row(i));
  }

  void sweep(std::uint64_t s, bool parallel, double sigma2 = 0.01) {
    LatentSweepInputs in{x_star, target, trees, grid, sigma2, hp, 77, s};
    EnsembleCache cache{assign, fit};
    if (parallel) update_latent_x(state, in, cache);
    else update_latent_x_serial(state, in, cache);
  }
};

Fixture random_fixture(std::size_t n, std::size_t p, std::uint64_t seed) {
  Fixture f;
  Rng rng(seed);
  f.x_star = Matrix<double>(n, p);
  for (double& v : f.x_star.values()) v = rng.normal(0.0, 0.3);
  f.target.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.target[i] = (f.x_star(i, 0) > 0 ? 0.3 : -0.3) + 0.05 * rng.normal();
  std::vector<double> se(p, 0.1);
  f.grid = CutpointGrid::expanded(f.x_star, se, 100);
  f.trees.resize(20);
  for (Tree& t : f.trees) {
    for (int g = 0; g < 3; ++g) {
      const auto leaves = t.leaves();
      t.grow(leaves[rng.index(leaves.size())], static_cast<std::int32_t>(rng.index(p)), static_cast<std::int32_t>(rng.index(100)));
    }
    for (auto leaf : t.leaves()) t.set_mu(leaf, rng.normal(0.0, 0.05));
  }
  f.hp.mu_x.assign(p, 0.0);
  f.hp.sigma_x2.assign(p, 0.08);
  f.hp.sigma_e2.assign(p, 0.01);
  f.hp.proposal_sd.assign(p, 0.1);
  f.reset();
  return f;
}

}  // namespace

TEST_CASE("flat ensemble: log ratios reduce to the two-Gaussian product") {
  const HyperParams hp = one_d(0.0, 0.3, 0.1);
  const CutpointGrid grid(std::vector<std::vector<double>>{{0.0}});
  const std::vector<Tree> flat = {Tree(0.4)};
  const double xs[] = {0.2};
  for (double a : {-0.3, 0.05, 0.21}) {
    for (double b : {-0.1, 0.4}) {
      const double xa[] = {a}, xb[] = {b};
      const double got = log_full_conditional_x(xa, 0.4, xs, flat, grid, 0.5, hp) - log_full_conditional_x(xb, 0.4, xs, flat, grid, 0.5, hp);
      const double want = log_normal(0.2, a, 0.01) + log_normal(a, 0.0, 0.09) - log_normal(0.2, b, 0.01) - log_normal(b, 0.0, 0.09);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("flat ensemble: conditional mode is the precision-weighted mean") {
  const HyperParams hp = one_d(0.0, 0.3, 0.1);
  const CutpointGrid grid(std::vector<std::vector<double>>{{0.0}});
  const std::vector<Tree> flat = {Tree(0.0)};
  const double xs[] = {0.2};
  double best = -1e300, arg = 0.0;
  for (int k = 0; k <= 40000; ++k) {
    const double x[] = {-0.2 + 1e-5 * k};
    const double v = log_full_conditional_x(x, 0.0, xs, flat, grid, 1.0, hp);
    if (v > best) best = v, arg = x[0];
  }
  CHECK(arg == doctest::Approx(0.18).epsilon(1e-4));
}

TEST_CASE("within a leaf region the conditional is a truncated product Gaussian") {
  const HyperParams hp = one_d(0.1, 0.3, 0.15);
  const CutpointGrid grid(std::vector<std::vector<double>>{{0.0}});
  Tree t;
  auto [l, r] = t.grow(Tree::root, 0, 0);
  t.set_mu(l, -1.0);
  t.set_mu(r, 1.0);
  const std::vector<Tree> trees = {t};
  const double xs[] = {-0.05};
  const double y = 0.7, s2 = 0.25;
  auto density = [&](double x) {
    const double xv[] = {x};
    return std::exp(log_full_conditional_x(xv, y, xs, trees, grid, s2, hp));
  };
  using boost::math::quadrature::gauss_kronrod;
  const double left = gauss_kronrod<double, 61>::integrate(density, -4.0, 0.0, 15, 1e-13);
  const double right = gauss_kronrod<double, 61>::integrate(density, 0.0, 4.0, 15, 1e-13);
  // x | x* without the response term is N(m, v); the mass of each region is
  // scaled by the response likelihood of that leaf.
  const double v = 1.0 / (1.0 / 0.0225 + 1.0 / 0.09);
  const double m = v * (-0.05 / 0.0225 + 0.1 / 0.09);
  const double marg = std::exp(log_normal(-0.05, 0.1, 0.0225 + 0.09));
  const double below = oracle::normal_cdf(0.0, m, std::sqrt(v));
  CHECK(left == doctest::Approx(std::exp(log_normal(y, -1.0, s2)) * marg * below).epsilon(1e-9));
  CHECK(right == doctest::Approx(std::exp(log_normal(y, 1.0, s2)) * marg * (1.0 - below)).epsilon(1e-9));
}

TEST_CASE("zero proposal scale leaves X at X* exactly") {
  Fixture f = random_fixture(50, 2, 1);
  f.hp.proposal_sd.assign(2, 0.0);
  for (int s = 0; s < 5; ++s) f.sweep(static_cast<std::uint64_t>(s), true);
  CHECK(f.state.x == f.x_star);
}

TEST_CASE("flat ensemble: stationary marginal is the analytic product Gaussian") {
  // 4000 observations share x* = 0.2, so their chains are independent copies;
  // the final states form an i.i.d. sample from the stationary law.
  Fixture f;
  const std::size_t n = 4000;
  f.x_star = Matrix<double>(n, 1, 0.2);
  f.target.assign(n, 0.0);
  f.trees = {Tree(0.0)};
  f.grid = CutpointGrid(std::vector<std::vector<double>>{{0.0}});
  f.hp = one_d(0.0, 0.3, 0.1);
  f.reset();
  for (int s = 0; s < 300; ++s) f.sweep(static_cast<std::uint64_t>(s), true);
  const double v = 1.0 / (1.0 / 0.01 + 1.0 / 0.09);
  const double m = v * 0.2 / 0.01;
  CHECK(m == doctest::Approx(0.18));
  std::vector<double> xs(f.state.x.values().begin(), f.state.x.values().end());
  const double d = oracle::ks_statistic(xs, [&](double x) { return oracle::normal_cdf(x, m, std::sqrt(v)); });
  CHECK(oracle::ks_pvalue(d, n) > 0.01);
  for (std::size_t i = 0; i < n; ++i) CHECK(f.state.acceptance_rate(i) <= 1.0);
}

TEST_CASE("parallel and serial latent kernels agree bitwise across thread counts") {
  Fixture a = random_fixture(300, 3, 5);
  Fixture b = a;
  Fixture c = a;
  const int saved = omp_get_max_threads();
  for (int s = 0; s < 10; ++s) {
    omp_set_num_threads(3);
    a.sweep(static_cast<std::uint64_t>(s), true);
    omp_set_num_threads(1);
    c.sweep(static_cast<std::uint64_t>(s), true);
    b.sweep(static_cast<std::uint64_t>(s), false);
  }
  omp_set_num_threads(saved);
  CHECK(a.state.x == b.state.x);
  CHECK(a.state.x == c.state.x);
  CHECK(a.fit == b.fit);
  CHECK(a.state.accepted == b.state.accepted);
  std::uint64_t acc = 0;
  for (auto v : a.state.accepted) acc += v;
  CHECK(acc > 0);
}

TEST_CASE("accepted moves refresh every tree's assignment and the fit") {
  Fixture f = random_fixture(200, 2, 9);
  for (int s = 0; s < 20; ++s) {
    f.sweep(static_cast<std::uint64_t>(s), true);
    CHECK(f.state.cells == f.grid.cells(f.state.x));
    for (std::size_t h = 0; h < f.trees.size(); ++h) CHECK(f.assign[h] == NodeAssignment::from_cells(f.trees[h], f.state.cells));
    for (std::size_t i = 0; i < f.fit.size(); ++i) CHECK(f.fit[i] == evaluate_ensemble(f.trees, f.grid, f.state.x.row(i)));
  }
}

TEST_CASE("updating x_i never depends on other observations") {
  Fixture a = random_fixture(100, 1, 13);
  Fixture b = a;
  b.x_star(40, 0) += 0.5;
  b.target[41] = 3.0;
  b.reset();
  for (int s = 0; s < 5; ++s) {
    a.sweep(static_cast<std::uint64_t>(s), true);
    b.sweep(static_cast<std::uint64_t>(s), true);
  }
  for (std::size_t i = 0; i < 100; ++i)
    if (i != 40 && i != 41) CHECK(a.state.x(i, 0) == b.state.x(i, 0));
}

TEST_CASE("non-finite conditional is reported with the observation index") {
  Fixture f = random_fixture(20, 1, 3);
  f.target[7] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(f.sweep(0, false), doctest::Contains("observation 7"), SamplerError);
}
