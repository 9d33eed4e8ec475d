#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sliver/metrics.hpp"
#include "sliver/model.hpp"
#include "sliver/rereco.hpp"
#include "sliver/simgen.hpp"
#include "sliver/training.hpp"
#include "sliver/windowing.hpp"

namespace sliver {

struct AuditConfig {
  std::vector<Duration> bucket_edges = default_accuracy_buckets();
  /// Impression-window sizes for the accuracy-vs-window curve.
  std::vector<Duration> curve_windows;
};

struct RerecoConfig {
  RerecoPolicy policy;
  TaskWeights fusion{1.0, 1.0, 1.0};
  /// Seed of the model trained when no checkpoint is given.
  std::uint64_t model_seed = 1;
};

struct ExperimentConfig {
  GeneratorConfig generator;
  std::vector<WindowPolicy> paradigms;
  std::vector<Architecture> models;
  EncodingOptions encoding;
  ModelConfig model;
  TrainConfig train;
  EvalSchedule schedule;
  std::vector<std::uint64_t> seeds;
  RerecoConfig rereco;
  AuditConfig audit;
  Duration session_timeout = std::chrono::hours(24);
  std::size_t threads = 1;

  EvalConfig eval_config(Architecture arch) const;
};

/// A flag override: JSON pointer into the config and a JSON value.
struct ConfigOverride {
  std::string pointer;
  std::string value;
};

/// Documented default configuration (JSON with comments).
const std::string& default_config_text();

/// Defaults, then the file (if any), then overrides. Unknown keys, bad types
/// and invalid values throw ConfigError.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<ConfigOverride>& overrides = {});
ExperimentConfig parse_config(std::string_view text, const std::vector<ConfigOverride>& overrides = {});

/// Canonical JSON of an effective configuration; equal configs dump equal text.
std::string dump_config(const ExperimentConfig& config);

}  // namespace sliver
