#include "mebart/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace mebart {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v, where);
  out = v;
}

std::vector<double> scalar_or_list(const json& v, const std::string& where) {
  if (v.is_number()) return {v.get<double>()};
  if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
    return v.get<std::vector<double>>();
  throw ConfigError(where + ": expected a number or a list of numbers");
}

json scenario_json(const ScenarioSpec& s) {
  return {{"function", to_string(s.function)}, {"n_train", s.n_train}, {"n_test", s.n_test}, {"mu_x", s.mu_x},
          {"sigma_x", s.sigma_x},              {"sigma_e", s.sigma_e}, {"sigma_y", s.sigma_y}};
}

ScenarioSpec scenario_from(const json& j, const std::string& where) {
  reject_unknown(j, where, {"function", "n_train", "n_test", "mu_x", "sigma_x", "sigma_e", "sigma_y"});
  ScenarioSpec s;
  if (j.contains("function")) {
    std::string f;
    read(j, "function", f, where);
    try {
      s = ScenarioSpec::defaults(parse_true_function(f));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ".function: " + e.what());
    }
  }
  read(j, "n_train", s.n_train, where);
  read(j, "n_test", s.n_test, where);
  read(j, "mu_x", s.mu_x, where);
  read(j, "sigma_x", s.sigma_x, where);
  read(j, "sigma_e", s.sigma_e, where);
  read(j, "sigma_y", s.sigma_y, where);
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    if (scenarios.empty() && !input) throw ConfigError("config: need at least one scenario or an input file");
    for (const auto& s : scenarios) s.validate();
    if (methods.empty()) throw ConfigError("config: methods must not be empty");
    if (replicates < 1) throw ConfigError("config: replicates must be >= 1");
    sampler.validate();
    HyperParams probe;
    if (hyper.num_trees) probe.num_trees = *hyper.num_trees;
    if (hyper.k) probe.k = *hyper.k;
    if (hyper.alpha) probe.alpha = *hyper.alpha;
    if (hyper.beta) probe.beta = *hyper.beta;
    if (hyper.nu) probe.nu = *hyper.nu;
    if (hyper.lambda) probe.lambda = *hyper.lambda;
    if (hyper.q) probe.q = *hyper.q;
    if (hyper.n_cutpoints) probe.n_cutpoints = *hyper.n_cutpoints;
    if (hyper.min_leaf_size) probe.min_leaf_size = *hyper.min_leaf_size;
    probe.validate();
    if (hyper.q && !(*hyper.q > 0.0 && *hyper.q < 1.0)) throw ConfigError("config: hyper.q must lie in (0, 1)");
    if (!(hyper.proposal_multiplier >= 0.0)) throw ConfigError("config: hyper.proposal_multiplier must be >= 0");
    if (sigma_e)
      for (double s : *sigma_e)
        if (!(s >= 0.0)) throw ConfigError("config: sigma_e must be non-negative");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json scen = json::array();
  for (const auto& s : c.scenarios) scen.push_back(scenario_json(s));
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  const HyperOverrides& h = c.hyper;
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  json hyper = {{"num_trees", h.num_trees.value_or(200)},
                {"k", h.k.value_or(2.0)},
                {"alpha", h.alpha.value_or(0.95)},
                {"beta", h.beta.value_or(2.0)},
                {"nu", h.nu.value_or(3.0)},
                {"q", h.q.value_or(0.9)},
                {"lambda", opt(h.lambda)},
                {"n_cutpoints", h.n_cutpoints.value_or(100)},
                {"min_leaf_size", h.min_leaf_size.value_or(1)},
                {"sigma_hat", h.sigma_hat == SigmaHatSource::sample_variance ? "sample_variance" : "least_squares"},
                {"mu_x", opt(h.mu_x)},
                {"sigma_x2", opt(h.sigma_x2)},
                {"proposal_multiplier", h.proposal_multiplier}};
  const SamplerConfig& s = c.sampler;
  json sampler = {{"n_burn", s.n_burn},
                  {"n_keep", s.n_keep},
                  {"thin", s.thin},
                  {"n_chains", s.n_chains},
                  {"keep_trees", s.keep_trees},
                  {"keep_latent_draws", s.keep_latent_draws},
                  {"check_every", s.check_every},
                  {"parallel_latent", s.parallel_latent}};
  return {{"scenarios", scen},
          {"input", opt(c.input)},
          {"test_input", opt(c.test_input)},
          {"sigma_e", opt(c.sigma_e)},
          {"methods", methods},
          {"hyper", hyper},
          {"sampler", sampler},
          {"replicates", c.replicates},
          {"output_dir", c.output_dir},
          {"seed", c.seed}};
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, "config",
                 {"scenarios", "input", "test_input", "sigma_e", "methods", "hyper", "sampler", "replicates", "output_dir", "seed"});
  ExperimentConfig c;
  if (j.contains("scenarios")) {
    const json& s = j.at("scenarios");
    if (!s.is_array()) throw ConfigError("config.scenarios: expected a list");
    c.scenarios.clear();
    for (std::size_t i = 0; i < s.size(); ++i) c.scenarios.push_back(scenario_from(s[i], "config.scenarios[" + std::to_string(i) + "]"));
  }
  read_opt(j, "input", c.input, "config");
  read_opt(j, "test_input", c.test_input, "config");
  if (j.contains("sigma_e") && !j.at("sigma_e").is_null()) c.sigma_e = scalar_or_list(j.at("sigma_e"), "config.sigma_e");
  if (j.contains("methods")) {
    std::vector<std::string> names;
    read(j, "methods", names, "config");
    c.methods.clear();
    for (const auto& n : names) {
      try {
        c.methods.push_back(parse_model_kind(n));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.methods: ") + e.what());
      }
    }
  }
  if (j.contains("hyper")) {
    const json& h = j.at("hyper");
    const std::string w = "config.hyper";
    reject_unknown(h, w, {"num_trees", "k", "alpha", "beta", "nu", "q", "lambda", "n_cutpoints", "min_leaf_size", "sigma_hat",
                          "mu_x", "sigma_x2", "proposal_multiplier"});
    read_opt(h, "num_trees", c.hyper.num_trees, w);
    read_opt(h, "k", c.hyper.k, w);
    read_opt(h, "alpha", c.hyper.alpha, w);
    read_opt(h, "beta", c.hyper.beta, w);
    read_opt(h, "nu", c.hyper.nu, w);
    read_opt(h, "q", c.hyper.q, w);
    read_opt(h, "lambda", c.hyper.lambda, w);
    read_opt(h, "n_cutpoints", c.hyper.n_cutpoints, w);
    read_opt(h, "min_leaf_size", c.hyper.min_leaf_size, w);
    if (h.contains("sigma_hat")) {
      std::string s;
      read(h, "sigma_hat", s, w);
      if (s == "sample_variance") c.hyper.sigma_hat = SigmaHatSource::sample_variance;
      else if (s == "least_squares") c.hyper.sigma_hat = SigmaHatSource::least_squares;
      else throw ConfigError(w + ".sigma_hat: expected sample_variance or least_squares");
    }
    if (h.contains("mu_x") && !h.at("mu_x").is_null()) c.hyper.mu_x = scalar_or_list(h.at("mu_x"), w + ".mu_x");
    if (h.contains("sigma_x2") && !h.at("sigma_x2").is_null()) c.hyper.sigma_x2 = scalar_or_list(h.at("sigma_x2"), w + ".sigma_x2");
    read(h, "proposal_multiplier", c.hyper.proposal_multiplier, w);
  }
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    const std::string w = "config.sampler";
    reject_unknown(s, w, {"n_burn", "n_keep", "thin", "n_chains", "keep_trees", "keep_latent_draws", "check_every", "parallel_latent"});
    read(s, "n_burn", c.sampler.n_burn, w);
    read(s, "n_keep", c.sampler.n_keep, w);
    read(s, "thin", c.sampler.thin, w);
    read(s, "n_chains", c.sampler.n_chains, w);
    read(s, "keep_trees", c.sampler.keep_trees, w);
    read(s, "keep_latent_draws", c.sampler.keep_latent_draws, w);
    read(s, "check_every", c.sampler.check_every, w);
    read(s, "parallel_latent", c.sampler.parallel_latent, w);
  }
  read(j, "replicates", c.replicates, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "seed", c.seed, "config");
  c.sampler.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
  return buf;
}

}  // namespace mebart
