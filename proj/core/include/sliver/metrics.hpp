#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sliver/features.hpp"
#include "sliver/model.hpp"
#include "sliver/training.hpp"
#include "sliver/windowing.hpp"

namespace sliver {

/// Wilcoxon-Mann-Whitney AUC with ties counted as one half. Labels are 0/1.
/// nullopt when either class is missing.
std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// ((measured - 0.5) / (base - 0.5) - 1) * 100. Throws DomainError if base <= 0.5.
double rela_impr(double auc_measured, double auc_base);

struct Quantiles {
  std::size_t count = 0;
  double p50 = 0.0;
  double p90 = 0.0;
  double max = 0.0;
};

/// Nearest-rank quantiles of a sample of milliseconds.
Quantiles summarize(std::vector<double> values);

struct DelayStats {
  std::string paradigm;
  /// μ − y^b over positive labels, per task (ms).
  std::array<Quantiles, kNumTasks> positive_delay;
  /// μ − impression_ts over all samples (ms).
  Quantiles emit_after_impression;
  /// μ − request_ts over all samples (ms).
  Quantiles emit_after_request;
};

DelayStats delay_stats(std::span<const LabeledSample> samples, std::span<const ImpressionSession> sessions,
                       std::string paradigm);

// ---------------------------------------------------------------------------
// Streaming evaluation

struct EvalSchedule {
  /// Training covers μ < start before the first test window.
  Timestamp start = from_ms(5 * 3'600'000);
  Duration step = std::chrono::hours(1);
  std::size_t windows = 5;
};

struct EvalConfig {
  EvalSchedule schedule;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  ModelConfig model;
  EncodingOptions encoding;
  TrainConfig train;
  /// Seeds trained concurrently; results do not depend on it.
  std::size_t threads = 1;
};

struct EvalWindowResult {
  Timestamp start{};
  Timestamp end{};
  std::array<std::optional<double>, kNumTasks> auc{};
  std::array<std::size_t, kNumTasks> positives{};
  std::array<std::size_t, kNumTasks> negatives{};
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<EvalWindowResult> windows;
  /// Mean over windows with a defined AUC.
  std::array<std::optional<double>, kNumTasks> mean_auc{};
  std::size_t trained_samples = 0;
  std::optional<Timestamp> max_trained_mu;
  std::vector<TraceRow> trace;
};

struct ParadigmEval {
  std::string paradigm;
  Architecture architecture = Architecture::kSharedBottom;
  std::vector<SeedRun> runs;
  /// Mean over seeds of the per-seed window means, with its standard error.
  std::array<std::optional<double>, kNumTasks> mean_auc{};
  std::array<std::optional<double>, kNumTasks> std_error{};
  /// Windows excluded from averages because one class was missing.
  std::array<std::size_t, kNumTasks> undefined_windows{};
};

/// Held-out examples of one test window: impressed, uncensored sessions whose
/// request falls in [start, end), labeled by their eventual outcome. Like
/// examples are restricted to clicked sessions.
struct TestSet {
  std::vector<std::size_t> sessions;
  std::vector<std::array<TaskLabel, kNumTasks>> labels;
};
TestSet build_test_set(std::span<const ImpressionSession> sessions, Timestamp start, Timestamp end);

/// Evaluates one model over held-out windows.
EvalWindowResult evaluate_window(const MultiTaskModel& model, const TestSet& test,
                                 std::span<const EncodedFeatures> features, Timestamp start, Timestamp end);

/// Alternates train-through-a / evaluate [a, a + step) for every schedule
/// window and seed. Throws LeakageError if a trained μ reaches the window.
ParadigmEval streaming_eval(std::span<const ImpressionSession> sessions, std::span<const EncodedFeatures> features,
                            std::span<const LabeledSample> stream, const std::string& paradigm,
                            const EvalConfig& config);

struct EvalReport {
  std::string baseline = "one-hour";
  std::vector<ParadigmEval> cells;
  std::vector<DelayStats> delays;

  /// RelaImpr of a cell's mean AUC against the baseline paradigm with the same
  /// architecture; nullopt when either AUC is missing or the baseline <= 0.5.
  std::optional<double> rela_impr_of(const ParadigmEval& cell, Task task) const;
};

void write_eval_csv(const std::filesystem::path& path, const EvalReport& report);
void write_eval_json(const std::filesystem::path& path, const EvalReport& report);

}  // namespace sliver
