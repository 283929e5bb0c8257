#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mebart/matrix.hpp"

namespace mebart {

/// Malformed or unusable input data (exit code 2 at the CLI).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure inside the sampler, e.g. a non-finite likelihood term
/// (exit code 3 at the CLI).
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observed predictors X*, response y and the known measurement-error scales.
struct ObservedDataset {
  Matrix<double> x_star;
  std::vector<double> y;
  /// Per-column measurement-error standard deviations; empty when unknown.
  std::vector<double> sigma_e;
  bool binary = false;
  /// Predictor column names, x1..xp when the source had none.
  std::vector<std::string> x_names;

  // Oracle-only columns carried by synthetic files; never read by the sampler.
  std::optional<Matrix<double>> x_true;
  std::optional<std::vector<double>> f_true;

  std::size_t n() const { return x_star.rows(); }
  std::size_t p() const { return x_star.cols(); }
};

/// True when every entry of `y` is exactly 0 or 1.
bool is_binary_response(const std::vector<double>& y);

/// Checks shape, finiteness and the minimum size required to fit a model.
/// `need_sigma_e` demands one positive scale per column.
void validate_for_fit(const ObservedDataset& data, bool need_sigma_e);

}  // namespace mebart
