#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sliver/events.hpp"
#include "sliver/time.hpp"

namespace sliver {

/// One sample at request + w carrying all three tasks.
struct FixedFromRequest {
  Duration w = std::chrono::hours(1);
};

/// One sample at impression + w carrying all three tasks.
struct FixedFromImpression {
  Duration w = std::chrono::minutes(5);
};

/// Uniform grid [t_uni + (k-1)w, t_uni + kw); samples at the grid boundary
/// after each behavior, negatives only at the exit window.
struct Sliding {
  Duration w = std::chrono::seconds(30);
  Timestamp t_uni = kStreamEpoch;
};

using WindowPolicy = std::variant<FixedFromRequest, FixedFromImpression, Sliding>;

/// Throws ConfigError when w <= 0.
void validate_policy(const WindowPolicy& policy);

/// "one-hour", "five-minute" or "sliver" (the names the CLI accepts).
std::string_view paradigm_name(const WindowPolicy& policy);
/// Default policy for a paradigm name, optionally with a different window or
/// grid origin. Throws ConfigError for unknown names.
WindowPolicy policy_from_name(std::string_view name, std::optional<Duration> window = std::nullopt,
                              std::optional<Timestamp> t_uni = std::nullopt);

enum class TaskLabel : std::int8_t { kNegative = -1, kAbsent = 0, kPositive = 1 };

std::string_view to_string(TaskLabel label);  // "-1", "absent", "+1"
std::optional<TaskLabel> parse_task_label(std::string_view text);

struct LabeledSample {
  /// Index into the session list the sample was produced from.
  std::size_t session = 0;
  std::array<TaskLabel, kNumTasks> labels{};
  /// μ: the moment the sample becomes available for training.
  Timestamp emit_ts{};
  std::optional<std::int64_t> window_id;
  Timestamp snapshot_ts{};

  TaskLabel label(Task task) const { return labels[index_of(task)]; }
  bool operator==(const LabeledSample&) const = default;
};

struct WindowIndex {
  std::int64_t k = 0;
  Timestamp mu{};
};

/// k = floor((ts - t_uni) / w) + 1, μ_k = t_uni + k·w. Throws DomainError when
/// ts < t_uni or w <= 0.
WindowIndex window_index(Timestamp t_uni, Duration w, Timestamp ts);

std::vector<LabeledSample> label_fixed_from_request(const ImpressionSession& session, Duration w,
                                                    std::size_t session_index = 0);
std::vector<LabeledSample> label_fixed_from_impression(const ImpressionSession& session, Duration w,
                                                       std::size_t session_index = 0);
std::vector<LabeledSample> label_sliver(const ImpressionSession& session, Duration w, Timestamp t_uni,
                                        std::size_t session_index = 0);
std::vector<LabeledSample> label_session(const ImpressionSession& session, const WindowPolicy& policy,
                                         std::size_t session_index = 0);

struct StreamOptions {
  /// Samples with μ past this point are not yet available and are dropped.
  std::optional<Timestamp> horizon_end;
  std::size_t threads = 1;
};

/// Labels every session and merges by (μ, request_ts, user_id, live_id).
/// The output does not depend on options.threads.
std::vector<LabeledSample> produce_stream(std::span<const ImpressionSession> sessions, const WindowPolicy& policy,
                                          const StreamOptions& options = {});

// ---------------------------------------------------------------------------
// Label audit

struct TaskAccuracy {
  std::size_t labeled = 0;
  std::size_t correct = 0;
  std::size_t positives = 0;
  std::size_t true_positives = 0;
  std::size_t negatives = 0;
  std::size_t true_negatives = 0;
  /// Labels emitted for sessions whose eventual outcome is positive.
  std::size_t eventual_positive = 0;
  std::size_t eventual_positive_hit = 0;

  std::optional<double> accuracy() const;
  std::optional<double> positive_precision() const;
  std::optional<double> negative_precision() const;
  /// Share of eventually-positive sessions the paradigm labels positive.
  std::optional<double> eventual_positive_accuracy() const;

  TaskAccuracy& operator+=(const TaskAccuracy& other);
};

struct AccuracyBucket {
  Duration lo{};
  /// Exclusive; nullopt for the open-ended last bucket.
  std::optional<Duration> hi;
  std::array<TaskAccuracy, kNumTasks> tasks{};
};

struct LabelAccuracyReport {
  std::array<TaskAccuracy, kNumTasks> overall{};
  /// Bucketed by μ − impression_ts.
  std::vector<AccuracyBucket> buckets;
  /// Samples whose session has no ground-truth outcome (censored or unknown).
  std::size_t excluded = 0;
};

/// Bucket edges start at 0 and increase strictly; the last bucket is open.
std::vector<Duration> default_accuracy_buckets();

/// Throws DomainError for bad bucket edges.
LabelAccuracyReport audit_label_accuracy(std::span<const LabeledSample> samples,
                                         std::span<const ImpressionSession> sessions,
                                         const EventualLabelTable& truth,
                                         std::span<const Duration> bucket_edges);

struct AccuracyPoint {
  Duration window{};
  std::array<TaskAccuracy, kNumTasks> tasks{};
};

/// Fixed-from-impression audit at each window size.
std::vector<AccuracyPoint> accuracy_curve(std::span<const ImpressionSession> sessions, const EventualLabelTable& truth,
                                          std::span<const Duration> windows);

void write_accuracy_report(const std::filesystem::path& path, const LabelAccuracyReport& report,
                           std::span<const AccuracyPoint> curve);

// ---------------------------------------------------------------------------
// Labeled-sample files

/// CSV: user_id,live_id,request_ts_ms,mu_ms,window_id,click,follow,like,snapshot_ts_ms
void write_samples(std::ostream& out, std::span<const LabeledSample> samples,
                   std::span<const ImpressionSession> sessions);
void write_samples(const std::filesystem::path& path, std::span<const LabeledSample> samples,
                   std::span<const ImpressionSession> sessions);

/// Resolves each row to its session by key. Throws SchemaError/ValidationError
/// for malformed rows and LookupError for unknown sessions.
std::vector<LabeledSample> read_samples(std::istream& in, std::span<const ImpressionSession> sessions);
std::vector<LabeledSample> read_samples(const std::filesystem::path& path,
                                        std::span<const ImpressionSession> sessions);

}  // namespace sliver
