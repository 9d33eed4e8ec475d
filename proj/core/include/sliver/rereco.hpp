#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sliver/metrics.hpp"
#include "sliver/model.hpp"
#include "sliver/simgen.hpp"

namespace sliver {

struct RerecoPolicy {
  bool enabled = true;
  Duration period = std::chrono::seconds(30);
};

struct RefreshEntry {
  Timestamp refresh_ts{};
  std::string live_id;
  Timestamp snapshot_ts{};
};

struct ServingEpisode {
  UserProfile user;
  Timestamp request_ts{};
  Timestamp impression_ts{};
  /// Fetched once at the first request; never modified afterwards.
  std::vector<LiveRoomSnapshot> candidates;

  // Filled by simulate_serving.
  std::size_t choice = 0;
  /// Snapshot time of the features the final choice was scored on.
  Timestamp choice_snapshot_ts{};
  std::vector<RefreshEntry> refresh_log;

  const std::string& chosen_live() const { return candidates.at(choice).live_id; }
  Duration staleness() const { return impression_ts - choice_snapshot_ts; }
};

/// One episode per impressed session that has a cached candidate list.
std::vector<ServingEpisode> build_episodes(std::span<const ImpressionSession> sessions, const GroundTruth& truth);

struct ServingSummary {
  std::size_t simulated = 0;
  /// Episodes without candidates.
  std::size_t skipped = 0;
};

/// Picks the fusion-score argmax (lowest index on ties) at the request and,
/// with the policy on, again at every tick request + i·period < impression on
/// snapshots read from the ground-truth feature clock at the tick.
ServingSummary simulate_serving(std::vector<ServingEpisode>& episodes, const MultiTaskModel& model,
                                const RerecoPolicy& policy, const GroundTruth& clock, const TaskWeights& alpha);

struct StalenessReport {
  std::size_t episodes = 0;
  Quantiles staleness_on;
  Quantiles staleness_off;
  double mean_staleness_on_ms = 0.0;
  double mean_staleness_off_ms = 0.0;
  /// Population click probability of the impressed room at impression time.
  double mean_ctr_on = 0.0;
  double mean_ctr_off = 0.0;
  double mean_diff = 0.0;
  double diff_std_error = 0.0;
  std::optional<double> t_statistic;
  /// One-sided paired t-test of on > off.
  double p_value = 1.0;
  std::size_t changed_choices = 0;
};

/// Pairs episodes by position; both lists come from the same build_episodes call.
StalenessReport staleness_report(std::span<const ServingEpisode> on, std::span<const ServingEpisode> off,
                                 const GroundTruth& truth);

void write_episodes_csv(const std::filesystem::path& path, std::span<const ServingEpisode> on,
                        std::span<const ServingEpisode> off, const GroundTruth& truth);
void write_staleness_json(const std::filesystem::path& path, const StalenessReport& report,
                          const RerecoPolicy& policy);

}  // namespace sliver
