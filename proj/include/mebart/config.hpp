#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mebart/priors.hpp"
#include "mebart/sampler.hpp"
#include "mebart/synthetic.hpp"

namespace mebart {

/// Malformed configuration (exit code 1 at the CLI).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything that determines a run. Read from JSON; unknown keys are errors.
struct ExperimentConfig {
  /// Synthetic designs; `bench` crosses them with methods and replicates.
  std::vector<ScenarioSpec> scenarios{ScenarioSpec::defaults(TrueFunction::indicator)};
  /// Training file; when set, `fit` ignores `scenarios`.
  std::optional<std::string> input;
  std::optional<std::string> test_input;
  /// Measurement-error sds for file inputs: one value or one per column.
  std::optional<std::vector<double>> sigma_e;
  std::vector<ModelKind> methods{ModelKind::bart, ModelKind::mebart};
  HyperOverrides hyper;
  SamplerConfig sampler;
  int replicates = 1;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical (sorted-key, compact) JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace mebart
