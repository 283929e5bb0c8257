// mebart command-line interface.
#include <omp.h>

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "mebart/config.hpp"
#include "mebart/csv.hpp"
#include "mebart/draws_io.hpp"
#include "mebart/experiment.hpp"
#include "mebart/format.hpp"
#include "mebart/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mebart;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, runtime = 3 };

int fail(Exit code, const std::string& kind, const std::string& message) {
  json j = {{"error", {{"code", static_cast<int>(code)}, {"kind", kind}, {"message", message}}}};
  std::cerr << j.dump() << std::endl;
  return code;
}

struct Globals {
  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool quiet = false;
  bool print_config = false;
};

// Flag values that override the config file when given.
struct Overrides {
  std::vector<std::string> functions;
  std::vector<double> sigma_e;
  std::optional<std::size_t> n_train, n_test;
  std::optional<double> sigma_y, mu_x, sigma_x;
  std::vector<std::string> methods;
  std::optional<int> replicates, n_burn, n_keep, thin, chains, num_trees;
  std::optional<std::string> input, test_input, out;
};

void log(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << std::endl;
}

ExperimentConfig effective_config(const Globals& g, const Overrides& o) {
  ExperimentConfig c = g.config_path ? load_config(*g.config_path) : ExperimentConfig{};
  if (g.seed) c.seed = *g.seed;
  if (!o.functions.empty() || !o.sigma_e.empty() || o.n_train || o.n_test || o.sigma_y || o.mu_x || o.sigma_x) {
    std::vector<ScenarioSpec> base;
    if (o.functions.empty()) {
      base = c.scenarios;
    } else {
      for (const auto& f : o.functions) {
        try {
          base.push_back(ScenarioSpec::defaults(parse_true_function(f)));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      }
    }
    std::vector<ScenarioSpec> out;
    for (ScenarioSpec s : base) {
      if (o.n_train) s.n_train = *o.n_train;
      if (o.n_test) s.n_test = *o.n_test;
      if (o.sigma_y) s.sigma_y = *o.sigma_y;
      if (o.mu_x) s.mu_x = *o.mu_x;
      if (o.sigma_x) s.sigma_x = *o.sigma_x;
      if (o.sigma_e.empty()) {
        out.push_back(s);
      } else {
        for (double se : o.sigma_e) {
          s.sigma_e = se;
          out.push_back(s);
        }
      }
    }
    c.scenarios = out;
  }
  if (!o.sigma_e.empty()) c.sigma_e = o.sigma_e;
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : o.methods) {
      try {
        c.methods.push_back(parse_model_kind(m));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (o.replicates) c.replicates = *o.replicates;
  if (o.n_burn) c.sampler.n_burn = *o.n_burn;
  if (o.n_keep) c.sampler.n_keep = *o.n_keep;
  if (o.thin) c.sampler.thin = *o.thin;
  if (o.chains) c.sampler.n_chains = *o.chains;
  if (o.num_trees) c.hyper.num_trees = *o.num_trees;
  if (o.input) c.input = *o.input;
  if (o.test_input) c.test_input = *o.test_input;
  if (o.out) c.output_dir = *o.out;
  c.sampler.seed = c.seed;
  c.validate();
  return c;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

CsvOptions csv_options(const ExperimentConfig& c, bool require_y = true) {
  CsvOptions o;
  o.sigma_e = c.sigma_e;
  o.require_y = require_y;
  return o;
}

Truth truth_for(const ExperimentConfig& c, const std::optional<std::string>& function, const ObservedDataset& train) {
  Truth t;
  if (function) {
    ScenarioSpec s = c.scenarios.empty() ? ScenarioSpec::defaults(parse_true_function(*function)) : c.scenarios.front();
    if (s.function != parse_true_function(*function)) s = ScenarioSpec::defaults(parse_true_function(*function));
    t.function = s.function;
    t.mu_x = s.mu_x;
    t.sigma_x = s.sigma_x;
    t.sigma_y = s.sigma_y;
  }
  if (!train.sigma_e.empty()) t.sigma_e = train.sigma_e.front();
  else if (c.sigma_e && !c.sigma_e->empty()) t.sigma_e = c.sigma_e->front();
  return t;
}

int cmd_simulate(const Globals& g, const Overrides& o) {
  const ExperimentConfig c = effective_config(g, o);
  const int reps = c.replicates;
  for (std::size_t s = 0; s < c.scenarios.size(); ++s) {
    for (int r = 0; r < reps; ++r) {
      ScenarioSpec spec = c.scenarios[s];
      spec.seed = replicate_seed(c.seed, s, r);
      const SyntheticSplit split = generate(spec);
      fs::path dir = fs::path(c.output_dir) / scenario_label(spec);
      if (reps > 1) dir /= "rep" + std::to_string(r);
      fs::create_directories(dir);
      save_csv((dir / "train.csv").string(), split.train.observed(spec.sigma_e), &spec);
      save_csv((dir / "test.csv").string(), split.test.observed(spec.sigma_e), &spec);
      log(g, "wrote " + dir.string());
    }
  }
  return ok;
}


ObservedDataset training_data(const ExperimentConfig& c, std::string& label, ObservedDataset* test) {
  if (c.input) {
    label = *c.input;
    ObservedDataset d = load_csv(*c.input, csv_options(c));
    if (test && c.test_input) *test = load_csv(*c.test_input, csv_options(c));
    return d;
  }
  ScenarioSpec spec = c.scenarios.front();
  spec.seed = replicate_seed(c.seed, 0, 0);
  label = scenario_label(spec);
  const SyntheticSplit split = generate(spec);
  if (test) *test = split.test.observed(spec.sigma_e);
  return split.train.observed(spec.sigma_e);
}

json hyper_json(const HyperParams& hp) {
  return {{"num_trees", hp.num_trees}, {"k", hp.k},           {"alpha", hp.alpha},       {"beta", hp.beta},
          {"nu", hp.nu},               {"lambda", hp.lambda}, {"q", hp.q},               {"n_cutpoints", hp.n_cutpoints},
          {"min_leaf_size", hp.min_leaf_size}, {"sigma_mu", hp.sigma_mu()}, {"mu_x", hp.mu_x}, {"sigma_x2", hp.sigma_x2},
          {"sigma_e2", hp.sigma_e2},   {"proposal_sd", hp.proposal_sd}};
}

int cmd_fit(const Globals& g, const Overrides& o, bool keep_trees) {
  ExperimentConfig c = effective_config(g, o);
  c.sampler.keep_trees = c.sampler.keep_trees || keep_trees;
  std::string label;
  ObservedDataset test;
  const ObservedDataset train = training_data(c, label, &test);
  const Matrix<double>* test_x = test.n() > 0 ? &test.x_star : nullptr;
  fs::create_directories(c.output_dir);
  for (ModelKind m : c.methods) {
    log(g, "fitting " + to_string(m) + " on " + label + " (" + std::to_string(train.n()) + " rows)");
    const FitResult fit = fit_model(train, m, c.hyper, c.sampler, test_x);
    const fs::path path = fs::path(c.output_dir) / (to_string(m) + ".draws");
    json side = {{"format", "mebart-draws"},
                 {"version", draws_format_version},
                 {"method", to_string(m)},
                 {"response", to_string(fit.draws.response)},
                 {"data", label},
                 {"seed", c.seed},
                 {"config", to_json(c)},
                 {"config_hash", config_hash(c)},
                 {"hyperparameters", hyper_json(fit.hp)},
                 {"created", timestamp()}};
    save_draws(path.string(), fit.draws, side);
    log(g, "wrote " + path.string());
  }
  return ok;
}

int cmd_predict(const Globals& g, const Overrides& o, const std::string& draws_path, const std::string& input) {
  const ExperimentConfig c = effective_config(g, o);
  const PosteriorDraws d = load_draws(draws_path);
  if (d.ensembles.empty()) throw DataError(draws_path + ": no tree ensembles stored; refit with trees kept");
  const ObservedDataset x = load_csv(input, csv_options(c, false));
  if (x.p() != d.grid.num_vars())
    throw DataError(input + ": has " + std::to_string(x.p()) + " predictors, model expects " + std::to_string(d.grid.num_vars()));
  Matrix<double> all(d.ensembles.size(), x.n());
  for (std::size_t k = 0; k < d.ensembles.size(); ++k) {
    const auto f = d.predict(k, x.x_star);
    std::copy(f.begin(), f.end(), all.row(k).begin());
  }
  auto body = [&](std::ostream& out) {
    out << "row,mean,q025,q975\n";
    std::vector<double> col(all.rows());
    for (std::size_t i = 0; i < x.n(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < col.size(); ++k) s += col[k] = all(k, i);
      std::sort(col.begin(), col.end());
      out << i << ',' << format_double(s / static_cast<double>(col.size())) << ',' << format_double(sorted_quantile(col, 0.025))
          << ',' << format_double(sorted_quantile(col, 0.975)) << '\n';
    }
  };
  if (o.out) write_file(*o.out, body);
  else body(std::cout);
  return ok;
}

int cmd_metrics(const Globals& g, const Overrides& o, const std::vector<std::string>& draws_paths, const std::string& test_path,
                const std::optional<std::string>& train_path, const std::optional<std::string>& function) {
  const ExperimentConfig c = effective_config(g, o);
  const ObservedDataset test = load_csv(test_path, csv_options(c));
  const ObservedDataset train = train_path ? load_csv(*train_path, csv_options(c)) : ObservedDataset{};
  Truth truth = truth_for(c, function, train.n() ? train : test);
  if (o.sigma_y) truth.sigma_y = *o.sigma_y;
  std::vector<MetricReport> reports;
  for (const auto& p : draws_paths) {
    const PosteriorDraws d = load_draws(p);
    const PredictionSet pred = predict_set(d, test, truth);
    MetricReport r = compute_metrics(d, train, test, pred, truth);
    r.scenario = function ? *function : fs::path(test_path).stem().string();
    reports.push_back(std::move(r));
  }
  auto body = [&](std::ostream& out) { write_metrics_wide(out, reports); };
  if (o.out) write_file(*o.out, body);
  else body(std::cout);
  return ok;
}

int cmd_bench(const Globals& g, const Overrides& o) {
  const ExperimentConfig c = effective_config(g, o);
  const std::size_t jobs = c.scenarios.size() * static_cast<std::size_t>(c.replicates);
  log(g, "bench: " + std::to_string(c.scenarios.size()) + " scenarios x " + std::to_string(c.replicates) + " replicates x " +
             std::to_string(c.methods.size()) + " methods");
  const auto reports = run_bench(c, [&](std::size_t done, std::size_t total) {
    if (!g.quiet && (done == total || done % std::max<std::size_t>(1, total / 20) == 0))
      std::cerr << "  " << done << "/" << total << " jobs" << std::endl;
  });
  (void)jobs;
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  write_file(dir / "metrics.csv", [&](std::ostream& out) { write_metrics_wide(out, reports); });
  write_file(dir / "metrics_long.csv", [&](std::ostream& out) { write_metrics_long(out, reports); });
  const auto summary = summarize(reports);
  write_file(dir / "summary.csv", [&](std::ostream& out) { write_summary_csv(out, summary); });
  write_file(dir / "config.json", [&](std::ostream& out) {
    out << json{{"config", to_json(c)}, {"config_hash", config_hash(c)}, {"created", timestamp()}}.dump(2) << '\n';
  });
  if (!g.quiet) write_summary_table(std::cout, summary);
  log(g, "wrote " + (dir / "metrics.csv").string());
  return ok;
}

int cmd_trace(const Globals& g, const Overrides& o, const std::string& draws_path) {
  (void)effective_config(g, o);
  const PosteriorDraws d = load_draws(draws_path);
  if (d.sigma_trace.empty()) throw DataError(draws_path + ": no sigma trace (probit fits hold sigma fixed)");
  auto body = [&](std::ostream& out) { write_trace(out, d); };
  if (o.out) write_file(*o.out, body);
  else body(std::cout);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian additive regression trees with covariate measurement error"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  Overrides o;
  app.add_option("--config", g.config_path, "JSON experiment configuration");
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--threads", g.threads, "Worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_flag("--print-config", g.print_config, "Print the effective configuration as JSON and exit");

  auto scenario_flags = [&](CLI::App* sub) {
    sub->add_option("--function", o.functions, "indicator, sin, combo, step, friedman (repeatable)")->delimiter(',');
    sub->add_option("--sigma-e", o.sigma_e, "Measurement-error sd(s)")->delimiter(',');
    sub->add_option("--sigma-y", o.sigma_y, "Response noise sd");
    sub->add_option("--mu-x", o.mu_x, "Latent predictor mean");
    sub->add_option("--sigma-x", o.sigma_x, "Latent predictor sd");
    sub->add_option("--n-train", o.n_train, "Training rows");
    sub->add_option("--n-test", o.n_test, "Test rows");
  };
  auto sampler_flags = [&](CLI::App* sub) {
    sub->add_option("--method", o.methods, "bart, mebart (repeatable)")->delimiter(',');
    sub->add_option("--n-burn", o.n_burn, "Burn-in sweeps");
    sub->add_option("--n-keep", o.n_keep, "Kept draws per chain");
    sub->add_option("--thin", o.thin, "Keep every k-th sweep");
    sub->add_option("--chains", o.chains, "Chains");
    sub->add_option("--num-trees", o.num_trees, "Trees in the ensemble");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic train/test CSV files");
  scenario_flags(simulate);
  simulate->add_option("--replicates", o.replicates, "Datasets per scenario");
  simulate->add_option("--out-dir", o.out, "Output directory");

  bool no_trees = false;
  auto* fit = app.add_subcommand("fit", "Fit models and write posterior draws");
  scenario_flags(fit);
  sampler_flags(fit);
  fit->add_option("--train", o.input, "Training CSV (default: simulate the first scenario)");
  fit->add_option("--test", o.test_input, "Test CSV evaluated at every kept draw");
  fit->add_option("--out-dir", o.out, "Output directory");
  fit->add_flag("--no-trees", no_trees, "Do not store ensembles (predict and metrics will be unavailable)");

  std::string draws_path, input_path;
  auto* predict = app.add_subcommand("predict", "Evaluate saved draws at new X*");
  predict->add_option("--draws", draws_path, "Draws file")->required();
  predict->add_option("--input", input_path, "CSV with predictor columns")->required();
  predict->add_option("--out", o.out, "Output CSV (default stdout)");

  std::vector<std::string> metric_draws;
  std::string test_path;
  std::optional<std::string> train_path, function;
  auto* metrics = app.add_subcommand("metrics", "Score saved draws against a test file");
  metrics->add_option("--draws", metric_draws, "Draws file(s)")->required()->delimiter(',');
  metrics->add_option("--test", test_path, "Test CSV (oracle columns enable the true-X metrics)")->required();
  metrics->add_option("--train", train_path, "Training CSV with oracle columns (enables X RMSE)");
  metrics->add_option("--function", function, "True function for ISE");
  metrics->add_option("--sigma-y", o.sigma_y, "True response sd for sigma CRPS");
  metrics->add_option("--sigma-e", o.sigma_e, "Measurement-error sd(s)")->delimiter(',');
  metrics->add_option("--out", o.out, "Output CSV (default stdout)");

  auto* bench = app.add_subcommand("bench", "Run the scenario x replicate x method grid");
  scenario_flags(bench);
  sampler_flags(bench);
  bench->add_option("--replicates", o.replicates, "Replicates per scenario");
  bench->add_option("--out-dir", o.out, "Output directory");

  auto* trace = app.add_subcommand("trace", "Export the sigma trace of a draws file");
  trace->add_option("--draws", draws_path, "Draws file")->required();
  trace->add_option("--out", o.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(usage, "usage", e.what());
  }

  try {
    if (g.threads > 0) omp_set_num_threads(g.threads);
    if (g.print_config) {
      std::cout << to_json(effective_config(g, o)).dump(2) << std::endl;
      return ok;
    }
    if (simulate->parsed()) return cmd_simulate(g, o);
    if (fit->parsed()) return cmd_fit(g, o, !no_trees);
    if (predict->parsed()) return cmd_predict(g, o, draws_path, input_path);
    if (metrics->parsed()) return cmd_metrics(g, o, metric_draws, test_path, train_path, function);
    if (bench->parsed()) return cmd_bench(g, o);
    if (trace->parsed()) return cmd_trace(g, o, draws_path);
  } catch (const ConfigError& e) {
    return fail(usage, "config", e.what());
  } catch (const std::invalid_argument& e) {
    return fail(usage, "usage", e.what());
  } catch (const DataError& e) {
    return fail(data, "data", e.what());
  } catch (const SamplerError& e) {
    return fail(runtime, "sampler", e.what());
  } catch (const std::exception& e) {
    return fail(runtime, "runtime", e.what());
  }
  return fail(usage, "usage", "no subcommand");
}
