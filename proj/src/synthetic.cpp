#include "mebart/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mebart/rng.hpp"

namespace mebart {

std::string to_string(TrueFunction f) {
  switch (f) {
    case TrueFunction::indicator: return "indicator";
    case TrueFunction::sin: return "sin";
    case TrueFunction::combo: return "combo";
    case TrueFunction::step: return "step";
    case TrueFunction::friedman: return "friedman";
  }
  return "unknown";
}

TrueFunction parse_true_function(const std::string& s) {
  for (TrueFunction f : {TrueFunction::indicator, TrueFunction::sin, TrueFunction::combo, TrueFunction::step, TrueFunction::friedman})
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown function '" + s + "'");
}

std::size_t function_dim(TrueFunction f) { return f == TrueFunction::friedman ? 5 : 1; }

double eval_true_function(TrueFunction f, std::span<const double> x) {
  if (x.size() != function_dim(f))
    throw std::invalid_argument(to_string(f) + " expects " + std::to_string(function_dim(f)) + " inputs, got " + std::to_string(x.size()));
  constexpr double pi = std::numbers::pi;
  switch (f) {
    case TrueFunction::indicator: return x[0] < 0.0 ? -1.0 : 1.0;
    case TrueFunction::sin: return std::sin(2.0 * pi * x[0]);
    case TrueFunction::combo: return x[0] < 0.0 ? std::cos(pi * x[0]) : -std::cos(pi * x[0]);
    case TrueFunction::step: {
      const double a = std::abs(x[0]);
      if (a > 5.0 / 8.0) return 3.0;
      if (a > 3.0 / 8.0) return 2.0;
      if (a > 1.0 / 8.0) return 1.0;
      return 0.0;
    }
    case TrueFunction::friedman:
      return std::sin(pi * x[0] * x[1]) + 2.0 * (x[2] - 0.5) * (x[2] - 0.5) + x[3] + 0.5 * x[4];
  }
  return 0.0;
}

ScenarioSpec ScenarioSpec::defaults(TrueFunction f) {
  ScenarioSpec s;
  s.function = f;
  if (f == TrueFunction::friedman) s.mu_x = 0.5;
  return s;
}

void ScenarioSpec::validate() const {
  if (n_train < 1) throw std::invalid_argument("scenario: n_train must be >= 1");
  if (!(sigma_x > 0.0)) throw std::invalid_argument("scenario: sigma_x must be > 0");
  if (!(sigma_e >= 0.0) || !(sigma_y >= 0.0)) throw std::invalid_argument("scenario: noise sds must be >= 0");
}

ObservedDataset SyntheticDataset::observed(double sigma_e) const {
  ObservedDataset d;
  d.x_star = x_star;
  d.y = y;
  d.sigma_e.assign(x_star.cols(), sigma_e);
  d.x_true = x_true;
  d.f_true = f_true;
  return d;
}

SyntheticSplit generate(const ScenarioSpec& spec) {
  spec.validate();
  const std::size_t p = spec.dim();
  Rng rng(spec.seed);
  auto fill = [&](SyntheticDataset& out, std::size_t n) {
    out.x_true = Matrix<double>(n, p);
    out.x_star = Matrix<double>(n, p);
    out.y.resize(n);
    out.f_true.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) out.x_true(i, j) = spec.mu_x + spec.sigma_x * rng.normal();
      for (std::size_t j = 0; j < p; ++j) out.x_star(i, j) = out.x_true(i, j) + spec.sigma_e * rng.normal();
      out.f_true[i] = eval_true_function(spec.function, out.x_true.row(i));
      out.y[i] = out.f_true[i] + spec.sigma_y * rng.normal();
    }
  };
  SyntheticSplit split;
  split.spec = spec;
  fill(split.train, spec.n_train);
  fill(split.test, spec.n_test);
  return split;
}

}  // namespace mebart
