#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mebart/config.hpp"
#include "mebart/metrics.hpp"
#include "mebart/sampler.hpp"
#include "mebart/synthetic.hpp"

namespace mebart {

struct FitResult {
  HyperParams hp;
  PosteriorDraws draws;
};

/// Derives hyperparameters from `train` and runs the sampler. The response
/// kind follows the data (binary -> probit). `test_x` rows are evaluated at
/// every kept draw.
FitResult fit_model(const ObservedDataset& train, ModelKind model, const HyperOverrides& hyper, SamplerConfig cfg,
                    const Matrix<double>* test_x = nullptr);

/// Posterior function draws at the evaluation points of one test set.
struct PredictionSet {
  Matrix<double> at_x_star;  // draws x n_test
  Matrix<double> at_x_true;  // draws x n_test, empty without oracle columns
  double grid_lo = 0.0, grid_hi = 0.0;
  Matrix<double> at_grid;  // draws x n_grid, 1-D ISE grid; may be empty
};

/// What is known about the ground truth for scoring.
struct Truth {
  std::optional<TrueFunction> function;
  std::optional<double> sigma_y;
  double mu_x = 0.0;
  double sigma_x = 0.3;
  double sigma_e = 0.0;
};

/// Rows to evaluate for a test set: X*, then X_true when present, then the
/// ISE grid over mu_x +- 3 sigma_x for 1-D problems with a known function.
Matrix<double> evaluation_points(const ObservedDataset& test, const Truth& truth, std::size_t n_grid = 1001);
/// Splits draws evaluated at evaluation_points() back into a PredictionSet.
PredictionSet split_predictions(const Matrix<double>& draws, const ObservedDataset& test, const Truth& truth,
                                std::size_t n_grid = 1001);
/// Evaluates stored ensembles (requires keep_trees) at evaluation_points().
PredictionSet predict_set(const PosteriorDraws& draws, const ObservedDataset& test, const Truth& truth,
                          std::size_t n_grid = 1001);

/// mse_noisy and mse_true_x compare posterior means with test y; ise compares
/// the mean with f over mu_x +- 3 sigma_x; coverage95 (p > 1) and crps_y use
/// f at the true test points; crps_sigma uses sigma_y; x_rmse compares the
/// latent posterior mean (X* for bart) with the training X_true.
MetricReport compute_metrics(const PosteriorDraws& draws, const ObservedDataset& train, const ObservedDataset& test,
                             const PredictionSet& pred, const Truth& truth);

std::string scenario_label(const ScenarioSpec& s);

/// Fits every method on one generated replicate and scores it.
std::vector<MetricReport> run_replicate(const ScenarioSpec& scenario, int replicate, const ExperimentConfig& cfg);

/// Seed of the dataset for (scenario index, replicate).
std::uint64_t replicate_seed(std::uint64_t base, std::size_t scenario, int replicate);

/// Full scenario x replicate x method grid; jobs run in parallel and results
/// come back in grid order (scenario, replicate, method).
std::vector<MetricReport> run_bench(const ExperimentConfig& cfg, const std::function<void(std::size_t, std::size_t)>& progress = {});

void write_metrics_wide(std::ostream& out, const std::vector<MetricReport>& reports);
/// scenario,method,replicate,metric,value
void write_metrics_long(std::ostream& out, const std::vector<MetricReport>& reports);
std::string long_csv_header();

struct SummaryRow {
  std::string scenario;
  std::string method;
  std::string metric;
  double median = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};
std::vector<SummaryRow> summarize(const std::vector<MetricReport>& reports);
void write_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

/// chain,iteration,sigma,burn_in
void write_trace(std::ostream& out, const PosteriorDraws& draws);
std::string trace_csv_header();

double median(std::vector<double> v);

}  // namespace mebart
