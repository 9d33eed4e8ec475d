#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sliver/events.hpp"
#include "sliver/time.hpp"

namespace sliver {

/// Log-normal over milliseconds: exp(mu + sigma * Z).
struct LogNormal {
  double mu = 0.0;
  double sigma = 1.0;

  double cdf(double ms) const;
  double quantile(double p) const;
};

struct ShiftedLogNormal {
  double shift_ms = 0.0;
  LogNormal body;
};

/// Behavior delays. Click and follow are measured from the impression, like
/// from the click (a like can only follow a click).
struct DelayDistributions {
  LogNormal click{10.991058742415904, 1.5};
  LogNormal follow{11.264943779921675, 1.6};
  LogNormal like_after_click{11.17601822150123, 1.2};
};

/// Exponential watch time after the last behavior (or the impression).
struct WatchDistribution {
  double engaged_mean_ms = 180'000.0;
  double browse_mean_ms = 8'000.0;
};

/// Behavior probabilities indexed [user segment][content state]. Like is
/// conditional on a click.
struct BaseRates {
  std::vector<std::vector<double>> click;
  std::vector<std::vector<double>> follow;
  std::vector<std::vector<double>> like;

  const std::vector<std::vector<double>>& of(Task task) const;
};

/// Four segments (gender x {young, older}) by six content states.
BaseRates default_base_rates();

struct GeneratorConfig {
  std::size_t num_users = 20'000;
  std::size_t num_lives = 60;
  std::size_t num_anchors = 200;
  Duration horizon = std::chrono::hours(10);

  bool content_shifts = true;
  /// Mean of the exponential time between content changes of one room.
  Duration content_shift_period = std::chrono::minutes(30);
  /// Static per-room log-odds offset.
  double room_quality_sd = 0.4;
  /// Per-room log-odds offset redrawn at every content change (not observable).
  double shift_effect_sd = 0.8;

  BaseRates base_rates = default_base_rates();
  DelayDistributions delays;
  WatchDistribution watch;

  double requests_per_user_hour = 0.5;
  ShiftedLogNormal impression_delay{1'000.0, {10.7, 1.1}};
  double unimpressed_fraction = 0.05;
  std::size_t candidates_per_request = 8;
  std::uint64_t seed = 42;

  std::size_t num_segments() const { return base_rates.click.size(); }
  std::size_t num_states() const { return base_rates.click.empty() ? 0 : base_rates.click.front().size(); }

  /// Throws ConfigError.
  void validate() const;
};

inline constexpr std::array<std::string_view, 2> kGenders = {"F", "M"};
inline constexpr std::array<std::string_view, 6> kAgeBuckets = {"<18", "18-24", "25-34", "35-44", "45-54", "55+"};
inline constexpr std::array<std::string_view, 8> kCities = {"c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7"};
inline constexpr std::array<std::string_view, 5> kAnchorTypes = {"gamer", "singer", "host", "seller", "athlete"};

/// Content states double as the observable live_type category.
std::string content_state_name(std::size_t state);
/// Segment of a (gender, age bucket) pair: 2 * gender + (age >= 35).
std::size_t segment_of(std::string_view gender, std::string_view age_bucket);

struct ContentSegment {
  Timestamp start{};
  std::uint32_t state = 0;
  /// Total log-odds offset while the segment lasts (quality + shift effect).
  double offset = 0.0;
};

struct RoomTrajectory {
  std::string live_id;
  std::string anchor_id;
  std::string anchor_gender;
  std::string anchor_type;
  std::vector<ContentSegment> segments;  // sorted by start, first starts at epoch
};

struct GroundTruth {
  BaseRates base_rates;
  std::vector<double> segment_shares;
  std::vector<std::string> state_names;
  std::vector<RoomTrajectory> rooms;
  EventualLabelTable labels;
  /// Candidate rooms cached at the first request, as indices into `rooms`.
  std::unordered_map<SessionKey, std::vector<std::uint32_t>, SessionKeyHash> candidates;

  const RoomTrajectory& room(std::string_view live_id) const;
  const ContentSegment& content_at(std::string_view live_id, Timestamp ts) const;
  LiveRoomSnapshot snapshot(std::string_view live_id, Timestamp ts) const;
  void index();

 private:
  std::unordered_map<std::string, std::size_t> room_index_;
};

double behavior_probability(const BaseRates& rates, Task task, std::size_t segment, std::size_t state, double offset);

/// Population-averaged click probability of the room's content at ts.
double true_ctr(const GroundTruth& truth, std::string_view live_id, Timestamp ts);

struct GeneratedLog {
  std::vector<InteractionEvent> events;
  std::vector<UserProfile> profiles;
  GroundTruth truth;
};

/// Deterministic in config.seed.
GeneratedLog generate(const GeneratorConfig& config);

void write_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth load_truth(const std::filesystem::path& path);

}  // namespace sliver
