#include "mebart/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mebart/format.hpp"

namespace mebart {

double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("mse: length mismatch");
  if (pred.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double simpson(std::span<const double> v, double lo, double hi) {
  const std::size_t n = v.size();
  if (n < 3 || n % 2 == 0) throw std::invalid_argument("simpson: grid size must be odd and >= 3");
  const double h = (hi - lo) / static_cast<double>(n - 1);
  double s = v[0] + v[n - 1];
  for (std::size_t i = 1; i + 1 < n; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * v[i];
  return s * h / 3.0;
}

double ise(const std::function<double(double)>& f_est, const std::function<double(double)>& f_true, double lo,
           double hi, std::size_t n_grid) {
  if (n_grid < 3 || n_grid % 2 == 0) throw std::invalid_argument("ise: n_grid must be odd and >= 3");
  std::vector<double> v(n_grid);
  for (std::size_t i = 0; i < n_grid; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_grid - 1);
    const double d = f_true(x) - f_est(x);
    if (!std::isfinite(d)) throw std::domain_error("ise: non-finite function value at x=" + format_double(x));
    v[i] = d * d;
  }
  return simpson(v, lo, hi);
}

double crps_samples(std::span<const double> samples, double observed) {
  const std::size_t k = samples.size();
  if (k < 2) throw std::invalid_argument("crps: need at least 2 samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  double abs_err = 0.0;
  for (double v : s) abs_err += std::abs(v - observed);
  abs_err /= static_cast<double>(k);
  // sum_{i,j} |s_i - s_j| = 2 sum_i (2i - k + 1) s_(i) for sorted s, 0-based i.
  double pair = 0.0;
  for (std::size_t i = 0; i < k; ++i) pair += (2.0 * static_cast<double>(i) - static_cast<double>(k) + 1.0) * s[i];
  pair = 2.0 * pair / (static_cast<double>(k) * static_cast<double>(k));
  return std::max(0.0, abs_err - 0.5 * pair);
}

double sorted_quantile(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile: empty input");
  const double h = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double coverage95(const Matrix<double>& draws, std::span<const double> truth) {
  if (draws.rows() < 40) throw std::invalid_argument("coverage95: need at least 40 draws");
  if (draws.cols() != truth.size()) throw std::invalid_argument("coverage95: column count does not match truth");
  if (truth.empty()) throw std::invalid_argument("coverage95: no test points");
  std::vector<double> col(draws.rows());
  std::size_t inside = 0;
  for (std::size_t j = 0; j < draws.cols(); ++j) {
    for (std::size_t d = 0; d < draws.rows(); ++d) col[d] = draws(d, j);
    std::sort(col.begin(), col.end());
    if (truth[j] >= sorted_quantile(col, 0.025) && truth[j] <= sorted_quantile(col, 0.975)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(truth.size());
}

XRmse x_rmse(const Matrix<double>& x_hat, const Matrix<double>& x_true, double sigma_e) {
  if (x_hat.rows() != x_true.rows() || x_hat.cols() != x_true.cols())
    throw std::invalid_argument("x_rmse: shape mismatch");
  if (x_hat.values().empty()) throw std::invalid_argument("x_rmse: empty input");
  XRmse r;
  r.raw = std::sqrt(mse(x_hat.values(), x_true.values()));
  r.scaled = sigma_e > 0.0 ? r.raw / sigma_e : std::numeric_limits<double>::quiet_NaN();
  return r;
}

double reliability_ratio(double sigma_x, double sigma_e) {
  if (!(sigma_x > 0.0) || !(sigma_e >= 0.0)) throw std::invalid_argument("reliability_ratio: sds must be positive");
  return sigma_x * sigma_x / (sigma_x * sigma_x + sigma_e * sigma_e);
}

const std::vector<std::string>& MetricReport::metric_names() {
  static const std::vector<std::string> names = {"mse_noisy", "mse_true_x", "ise",     "coverage95", "x_rmse",
                                                 "x_rmse_scaled", "crps_y",  "crps_sigma", "sigma_mean"};
  return names;
}

std::vector<std::pair<std::string, double>> MetricReport::present() const {
  std::vector<std::pair<std::string, double>> out;
  if (has_mse_noisy) out.emplace_back("mse_noisy", mse_noisy);
  if (has_mse_true_x) out.emplace_back("mse_true_x", mse_true_x);
  if (has_ise) out.emplace_back("ise", ise);
  if (has_coverage95) out.emplace_back("coverage95", coverage95);
  if (has_x_rmse) {
    out.emplace_back("x_rmse", x_rmse);
    out.emplace_back("x_rmse_scaled", x_rmse_scaled);
  }
  if (has_crps_y) out.emplace_back("crps_y", crps_y);
  if (has_crps_sigma) out.emplace_back("crps_sigma", crps_sigma);
  if (has_sigma_mean) out.emplace_back("sigma_mean", sigma_mean);
  return out;
}

std::string MetricReport::csv_header() {
  std::string h = "scenario,method,replicate,sigma_e";
  for (const auto& n : metric_names()) h += "," + n;
  return h;
}

std::string MetricReport::csv_row() const {
  std::ostringstream out;
  out << scenario << ',' << method << ',' << replicate << ',' << format_double(sigma_e);
  const auto vals = present();
  for (const auto& name : metric_names()) {
    out << ',';
    auto it = std::find_if(vals.begin(), vals.end(), [&](const auto& kv) { return kv.first == name; });
    out << (it == vals.end() ? std::string("NA") : format_double(it->second));
  }
  return out.str();
}

}  // namespace mebart
