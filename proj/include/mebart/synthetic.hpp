#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mebart/data.hpp"
#include "mebart/matrix.hpp"

namespace mebart {

enum class TrueFunction { indicator, sin, combo, step, friedman };

std::string to_string(TrueFunction f);
TrueFunction parse_true_function(const std::string& s);
/// Input dimension: 5 for friedman, 1 otherwise.
std::size_t function_dim(TrueFunction f);

/// Benchmark regression functions.
///   indicator: -1 if x < 0, 1 if x >= 0
///   sin:       sin(2 pi x)
///   combo:     cos(pi x) if x < 0, -cos(pi x) if x >= 0
///   step:      3 if |x| > 5/8, 2 if 3/8 < |x| <= 5/8, 1 if 1/8 < |x| <= 3/8, 0 otherwise
///   friedman:  sin(pi x1 x2) + 2 (x3 - 0.5)^2 + x4 + 0.5 x5
/// Throws std::invalid_argument on a dimension mismatch.
double eval_true_function(TrueFunction f, std::span<const double> x);

struct ScenarioSpec {
  TrueFunction function = TrueFunction::indicator;
  std::size_t n_train = 100;
  std::size_t n_test = 100;
  double mu_x = 0.0;
  double sigma_x = 0.3;
  double sigma_e = 0.1;
  double sigma_y = 0.1;
  std::uint64_t seed = 1;

  std::size_t dim() const { return function_dim(function); }
  /// 1-D designs: x ~ N(0, 0.3^2); friedman: x ~ N(0.5, 0.3^2 I_5). Both with
  /// sigma_e = sigma_y = 0.1 and 100 training / 100 test points.
  static ScenarioSpec defaults(TrueFunction f);
  void validate() const;
};

/// One split of a generated design with its ground truth.
struct SyntheticDataset {
  Matrix<double> x_true;
  Matrix<double> x_star;
  std::vector<double> y;
  std::vector<double> f_true;  // f at x_true

  /// Observed view with oracle columns attached; sigma_e set per column.
  ObservedDataset observed(double sigma_e) const;
};

struct SyntheticSplit {
  ScenarioSpec spec;
  SyntheticDataset train;
  SyntheticDataset test;
};

/// x_true ~ N(mu_x, sigma_x^2) per coordinate, x_star = x_true + N(0, sigma_e^2),
/// y = f(x_true) + N(0, sigma_y^2). Rows are drawn in order, the first n_train
/// forming the training split.
SyntheticSplit generate(const ScenarioSpec& spec);

}  // namespace mebart
