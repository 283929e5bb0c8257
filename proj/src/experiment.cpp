#include "mebart/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "mebart/format.hpp"
#include "mebart/rng.hpp"

namespace mebart {

namespace {

Matrix<double> column_block(const Matrix<double>& m, std::size_t begin, std::size_t count) {
  Matrix<double> out(m.rows(), count);
  for (std::size_t d = 0; d < m.rows(); ++d)
    for (std::size_t j = 0; j < count; ++j) out(d, j) = m(d, begin + j);
  return out;
}

std::vector<double> col_means(const Matrix<double>& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t d = 0; d < m.rows(); ++d)
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += m(d, j);
  for (double& v : out) v /= static_cast<double>(m.rows());
  return out;
}

bool has_grid(const ObservedDataset& test, const Truth& truth) { return test.p() == 1 && truth.function.has_value(); }

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

FitResult fit_model(const ObservedDataset& train, ModelKind model, const HyperOverrides& hyper, SamplerConfig cfg,
                    const Matrix<double>* test_x) {
  validate_for_fit(train, model == ModelKind::mebart);
  cfg.model = model;
  cfg.response = train.binary ? ResponseKind::probit : ResponseKind::continuous;
  FitResult r;
  r.hp = derive_hyperparams(train, hyper);
  r.draws = run_sampler(train, r.hp, cfg, test_x);
  return r;
}

Matrix<double> evaluation_points(const ObservedDataset& test, const Truth& truth, std::size_t n_grid) {
  const std::size_t n = test.n(), p = test.p();
  const std::size_t n_true = test.x_true ? n : 0;
  const std::size_t n_g = has_grid(test, truth) ? n_grid : 0;
  Matrix<double> pts(n + n_true + n_g, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) pts(i, j) = test.x_star(i, j);
  for (std::size_t i = 0; i < n_true; ++i)
    for (std::size_t j = 0; j < p; ++j) pts(n + i, j) = (*test.x_true)(i, j);
  const double lo = truth.mu_x - 3.0 * truth.sigma_x, hi = truth.mu_x + 3.0 * truth.sigma_x;
  for (std::size_t g = 0; g < n_g; ++g)
    pts(n + n_true + g, 0) = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(n_grid - 1);
  return pts;
}

PredictionSet split_predictions(const Matrix<double>& draws, const ObservedDataset& test, const Truth& truth,
                                std::size_t n_grid) {
  const std::size_t n = test.n();
  const std::size_t n_true = test.x_true ? n : 0;
  const std::size_t n_g = has_grid(test, truth) ? n_grid : 0;
  if (draws.cols() != n + n_true + n_g) throw std::invalid_argument("prediction matrix does not match the evaluation points");
  PredictionSet s;
  s.at_x_star = column_block(draws, 0, n);
  if (n_true) s.at_x_true = column_block(draws, n, n_true);
  if (n_g) {
    s.at_grid = column_block(draws, n + n_true, n_g);
    s.grid_lo = truth.mu_x - 3.0 * truth.sigma_x;
    s.grid_hi = truth.mu_x + 3.0 * truth.sigma_x;
  }
  return s;
}

PredictionSet predict_set(const PosteriorDraws& draws, const ObservedDataset& test, const Truth& truth, std::size_t n_grid) {
  if (draws.ensembles.empty()) throw DataError("draws file holds no tree ensembles; refit with trees kept");
  const Matrix<double> pts = evaluation_points(test, truth, n_grid);
  Matrix<double> all(draws.ensembles.size(), pts.rows());
  for (std::size_t d = 0; d < draws.ensembles.size(); ++d) {
    const auto f = draws.predict(d, pts);
    std::copy(f.begin(), f.end(), all.row(d).begin());
  }
  return split_predictions(all, test, truth, n_grid);
}

MetricReport compute_metrics(const PosteriorDraws& draws, const ObservedDataset& train, const ObservedDataset& test,
                             const PredictionSet& pred, const Truth& truth) {
  MetricReport r;
  r.method = to_string(draws.model);
  r.sigma_e = truth.sigma_e;
  const bool has_y = test.y.size() == test.n() && test.n() > 0;
  if (has_y && pred.at_x_star.rows() > 0) {
    r.has_mse_noisy = true;
    r.mse_noisy = mse(col_means(pred.at_x_star), test.y);
  }
  if (has_y && !pred.at_x_true.empty()) {
    r.has_mse_true_x = true;
    r.mse_true_x = mse(col_means(pred.at_x_true), test.y);
  }
  if (!pred.at_grid.empty() && truth.function) {
    const auto mean = col_means(pred.at_grid);
    std::vector<double> sq(mean.size());
    const std::size_t g = mean.size();
    for (std::size_t k = 0; k < g; ++k) {
      const double x = pred.grid_lo + (pred.grid_hi - pred.grid_lo) * static_cast<double>(k) / static_cast<double>(g - 1);
      const double d = eval_true_function(*truth.function, std::span<const double>(&x, 1)) - mean[k];
      sq[k] = d * d;
    }
    r.has_ise = true;
    r.ise = simpson(sq, pred.grid_lo, pred.grid_hi);
  }
  if (!pred.at_x_true.empty() && test.f_true) {
    if (test.p() > 1 && pred.at_x_true.rows() >= 40) {
      r.has_coverage95 = true;
      r.coverage95 = coverage95(pred.at_x_true, *test.f_true);
    }
    if (pred.at_x_true.rows() >= 2) {
      std::vector<double> col(pred.at_x_true.rows());
      double total = 0.0;
      for (std::size_t j = 0; j < test.n(); ++j) {
        for (std::size_t d = 0; d < col.size(); ++d) col[d] = pred.at_x_true(d, j);
        total += crps_samples(col, (*test.f_true)[j]);
      }
      r.has_crps_y = true;
      r.crps_y = total / static_cast<double>(test.n());
    }
  }
  if (draws.response == ResponseKind::continuous && !draws.sigma.empty()) {
    r.has_sigma_mean = true;
    double s = 0.0;
    for (double v : draws.sigma) s += v;
    r.sigma_mean = s / static_cast<double>(draws.sigma.size());
    if (truth.sigma_y && draws.sigma.size() >= 2) {
      r.has_crps_sigma = true;
      r.crps_sigma = crps_samples(draws.sigma, *truth.sigma_y);
    }
  }
  if (train.x_true) {
    const Matrix<double>& x_hat = draws.model == ModelKind::mebart ? draws.latent_x_mean : train.x_star;
    if (x_hat.rows() == train.n() && x_hat.cols() == train.p()) {
      const XRmse e = x_rmse(x_hat, *train.x_true, truth.sigma_e);
      r.has_x_rmse = true;
      r.x_rmse = e.raw;
      r.x_rmse_scaled = e.scaled;
    }
  }
  return r;
}

std::string scenario_label(const ScenarioSpec& s) { return to_string(s.function) + "_se" + format_double(s.sigma_e); }

std::uint64_t replicate_seed(std::uint64_t base, std::size_t scenario, int replicate) {
  return derive_seed(derive_seed(base, scenario), static_cast<std::uint64_t>(replicate));
}

namespace {

std::vector<MetricReport> run_replicate_seeded(const ScenarioSpec& scenario_in, std::uint64_t data_seed, int replicate,
                                               const ExperimentConfig& cfg) {
  ScenarioSpec scenario = scenario_in;
  scenario.seed = data_seed;
  const SyntheticSplit split = generate(scenario);
  const ObservedDataset train = split.train.observed(scenario.sigma_e);
  const ObservedDataset test = split.test.observed(scenario.sigma_e);
  Truth truth{scenario.function, scenario.sigma_y, scenario.mu_x, scenario.sigma_x, scenario.sigma_e};
  const Matrix<double> pts = evaluation_points(test, truth);

  std::vector<MetricReport> out;
  for (ModelKind m : cfg.methods) {
    SamplerConfig sc = cfg.sampler;
    sc.seed = derive_seed(data_seed, 0xb4);
    const FitResult fit = fit_model(train, m, cfg.hyper, sc, &pts);
    const PredictionSet pred = split_predictions(fit.draws.test_f, test, truth);
    MetricReport r = compute_metrics(fit.draws, train, test, pred, truth);
    r.scenario = scenario_label(scenario);
    r.replicate = replicate;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

std::vector<MetricReport> run_replicate(const ScenarioSpec& scenario, int replicate, const ExperimentConfig& cfg) {
  std::size_t index = 0;
  for (; index < cfg.scenarios.size(); ++index)
    if (scenario_label(cfg.scenarios[index]) == scenario_label(scenario)) break;
  return run_replicate_seeded(scenario, replicate_seed(cfg.seed, index, replicate), replicate, cfg);
}

std::vector<MetricReport> run_bench(const ExperimentConfig& cfg, const std::function<void(std::size_t, std::size_t)>& progress) {
  cfg.validate();
  const std::size_t n_rep = static_cast<std::size_t>(cfg.replicates);
  const std::size_t jobs = cfg.scenarios.size() * n_rep;
  std::vector<std::vector<MetricReport>> results(jobs);
  std::exception_ptr error;
  std::size_t done = 0;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(jobs); ++k) {
    const auto job = static_cast<std::size_t>(k);
    const std::size_t s = job / n_rep;
    const int rep = static_cast<int>(job % n_rep);
    try {
      results[job] = run_replicate_seeded(cfg.scenarios[s], replicate_seed(cfg.seed, s, rep), rep, cfg);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
#pragma omp critical
    {
      ++done;
      if (progress) progress(done, jobs);
    }
  }
  if (error) std::rethrow_exception(error);
  std::vector<MetricReport> out;
  for (auto& r : results)
    for (auto& m : r) out.push_back(std::move(m));
  return out;
}

void write_metrics_wide(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << MetricReport::csv_header() << '\n';
  for (const auto& r : reports) out << r.csv_row() << '\n';
}

std::string long_csv_header() { return "scenario,method,replicate,metric,value"; }

void write_metrics_long(std::ostream& out, const std::vector<MetricReport>& reports) {
  out << long_csv_header() << '\n';
  for (const auto& r : reports)
    for (const auto& [name, value] : r.present())
      out << r.scenario << ',' << r.method << ',' << r.replicate << ',' << name << ',' << format_double(value) << '\n';
}

std::vector<SummaryRow> summarize(const std::vector<MetricReport>& reports) {
  std::vector<SummaryRow> rows;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  std::vector<std::vector<double>> values;
  for (const auto& r : reports) {
    for (const auto& [name, value] : r.present()) {
      auto key = std::make_tuple(r.scenario, r.method, name);
      auto [it, inserted] = index.emplace(key, rows.size());
      if (inserted) {
        rows.push_back(SummaryRow{r.scenario, r.method, name, 0.0, 0.0, 0});
        values.emplace_back();
      }
      values[it->second].push_back(value);
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].count = values[k].size();
    double s = 0.0;
    for (double v : values[k]) s += v;
    rows[k].mean = s / static_cast<double>(values[k].size());
    rows[k].median = median(values[k]);
  }
  return rows;
}

void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows) {
  // One line per (scenario, method), median of each metric.
  std::vector<std::string> metrics;
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> cell;
  for (const auto& r : rows) {
    if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
    const auto g = std::make_pair(r.scenario, r.method);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    cell[g][r.metric] = r.median;
  }
  std::size_t w0 = 8;
  for (const auto& g : groups) w0 = std::max(w0, g.first.size());
  out << std::left << std::setw(static_cast<int>(w0) + 2) << "scenario" << std::setw(8) << "method";
  for (const auto& m : metrics) out << std::right << std::setw(std::max<int>(13, static_cast<int>(m.size()) + 2)) << m;
  out << '\n';
  for (const auto& g : groups) {
    out << std::left << std::setw(static_cast<int>(w0) + 2) << g.first << std::setw(8) << g.second;
    for (const auto& m : metrics) {
      std::ostringstream v;
      auto it = cell[g].find(m);
      if (it == cell[g].end()) v << "-";
      else v << std::setprecision(5) << it->second;
      out << std::right << std::setw(std::max<int>(13, static_cast<int>(m.size()) + 2)) << v.str();
    }
    out << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "scenario,method,metric,median,mean,count\n";
  for (const auto& r : rows)
    out << r.scenario << ',' << r.method << ',' << r.metric << ',' << format_double(r.median) << ',' << format_double(r.mean)
        << ',' << r.count << '\n';
}

std::string trace_csv_header() { return "chain,iteration,sigma,burn_in"; }

void write_trace(std::ostream& out, const PosteriorDraws& d) {
  out << trace_csv_header() << '\n';
  for (std::size_t c = 0; c < d.sigma_trace.cols(); ++c)
    for (std::size_t it = 0; it < d.sigma_trace.rows(); ++it)
      out << c << ',' << it << ',' << format_double(d.sigma_trace(it, c)) << ','
          << (it < static_cast<std::size_t>(d.n_burn) ? 1 : 0) << '\n';
}

}  // namespace mebart
