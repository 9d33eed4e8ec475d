#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "sliver/config.hpp"

namespace sliver {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Name of the marker left in an output directory whose run failed.
inline constexpr std::string_view kIncompleteMarker = "INCOMPLETE";

struct RunOptions {
  std::filesystem::path out;
  /// Generator output directory, or a single event-log file.
  std::optional<std::filesystem::path> input;
  /// Directory written by `label`.
  std::optional<std::filesystem::path> samples;
  std::optional<std::filesystem::path> checkpoint;
  EventLogSchema schema;
};

/// Sessions and ground truth read from an input directory or log file.
struct Dataset {
  std::vector<ImpressionSession> sessions;
  /// From the truth sidecar when present, else read off the sessions.
  EventualLabelTable eventual;
  std::optional<GroundTruth> truth;
};

Dataset load_dataset(const std::filesystem::path& input, const ExperimentConfig& config,
                     const EventLogSchema& schema = {});

void run_generate(const ExperimentConfig& config, const RunOptions& options);
void run_label(const ExperimentConfig& config, const RunOptions& options);
void run_audit(const ExperimentConfig& config, const RunOptions& options);
void run_train(const ExperimentConfig& config, const RunOptions& options);
void run_eval(const ExperimentConfig& config, const RunOptions& options);
void run_rereco(const ExperimentConfig& config, const RunOptions& options);
void run_report(const ExperimentConfig& config, const RunOptions& options);
void run_compare(const ExperimentConfig& config, const RunOptions& options);

/// Runs one subcommand: creates the output directory, writes config.json,
/// and leaves an INCOMPLETE marker if the run throws. Errors go to `err`.
int run_subcommand(std::string_view name, const ExperimentConfig& config, const RunOptions& options, std::ostream& err);

/// The matrix of mean AUC, standard error and RelaImpr read from eval.json.
void write_matrix(const std::filesystem::path& eval_json, const std::filesystem::path& out_dir);

}  // namespace sliver
