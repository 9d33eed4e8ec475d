#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sliver/time.hpp"

namespace sliver {

enum class BehaviorKind : std::uint8_t { kRequest, kImpression, kClick, kFollow, kLike, kExit };

std::string_view to_string(BehaviorKind kind);
std::optional<BehaviorKind> parse_behavior_kind(std::string_view name);

/// Prediction targets. Click and follow live in the impression space, like in
/// the post-click space.
enum class Task : std::uint8_t { kClick = 0, kFollow = 1, kLike = 2 };

inline constexpr std::size_t kNumTasks = 3;
inline constexpr std::array<Task, kNumTasks> kAllTasks = {Task::kClick, Task::kFollow, Task::kLike};

constexpr std::size_t index_of(Task task) { return static_cast<std::size_t>(task); }
std::string_view to_string(Task task);
BehaviorKind behavior_of(Task task);
constexpr bool in_post_click_space(Task task) { return task == Task::kLike; }

inline constexpr std::size_t kMaxClickHistory = 50;

struct UserProfile {
  std::string user_id;
  std::string gender;
  std::string age_bucket;
  std::string city;
  /// Most recent clicked anchors, oldest first, at most kMaxClickHistory.
  std::vector<std::string> click_anchor_history;

  bool operator==(const UserProfile&) const = default;
};

struct LiveRoomSnapshot {
  std::string live_id;
  std::string live_type;
  std::string anchor_id;
  std::string anchor_gender;
  std::string anchor_type;
  Timestamp snapshot_ts{};

  bool operator==(const LiveRoomSnapshot&) const = default;
};

/// Optional profile side-columns carried on event rows (normally on requests).
struct EventAttributes {
  std::optional<std::string> gender;
  std::optional<std::string> age_bucket;
  std::optional<std::string> city;
  std::optional<std::string> live_type;
  std::optional<std::string> anchor_gender;
  std::optional<std::string> anchor_type;

  bool operator==(const EventAttributes&) const = default;
};

struct InteractionEvent {
  BehaviorKind kind = BehaviorKind::kRequest;
  std::string user_id;
  std::string live_id;
  std::string anchor_id;
  Timestamp ts{};
  EventAttributes attrs;

  bool operator==(const InteractionEvent&) const = default;
};

/// Identifies one request -> impression -> exit arc of a user on a room.
struct SessionKey {
  std::string user_id;
  std::string live_id;
  Timestamp request_ts{};

  auto operator<=>(const SessionKey&) const = default;
  bool operator==(const SessionKey&) const = default;
};

struct SessionKeyHash {
  std::size_t operator()(const SessionKey& key) const noexcept;
};

struct ImpressionSession {
  UserProfile user;
  LiveRoomSnapshot live;
  Timestamp request_ts{};
  std::optional<Timestamp> impression_ts;
  /// First occurrence of click/follow/like, indexed by Task.
  std::array<std::optional<Timestamp>, kNumTasks> behavior_ts;
  std::optional<Timestamp> exit_ts;
  /// No exit was observed; exit_ts holds the close boundary instead.
  bool censored = false;

  SessionKey key() const { return {user.user_id, live.live_id, request_ts}; }
  bool impressed() const { return impression_ts.has_value(); }
  const std::optional<Timestamp>& behavior(Task task) const { return behavior_ts[index_of(task)]; }
  bool operator==(const ImpressionSession&) const = default;
};

/// Throws InvalidSessionError naming the session when an invariant is broken.
void validate_session(const ImpressionSession& session);

/// Eventual per-task outcome of an uncensored impressed session.
struct EventualLabels {
  std::array<bool, kNumTasks> positive{};
  bool operator==(const EventualLabels&) const = default;
};

using EventualLabelTable = std::unordered_map<SessionKey, EventualLabels, SessionKeyHash>;

/// Eventual labels read off the sessions themselves (behavior present before
/// exit). Censored and unimpressed sessions are skipped.
EventualLabelTable eventual_labels_from_sessions(std::span<const ImpressionSession> sessions);

// ---------------------------------------------------------------------------
// Event-log files

enum class LogFormat { kAuto, kJsonLines, kDelimited };

/// Maps canonical field names (kind, user_id, live_id, anchor_id, ts_ms and the
/// optional side-columns) to the names used in a particular file.
struct EventLogSchema {
  LogFormat format = LogFormat::kAuto;
  char delimiter = ',';
  std::map<std::string, std::string> columns;

  /// Column name for a canonical field; identity unless remapped.
  std::string column(const std::string& field) const;
};

std::vector<InteractionEvent> load_event_log(const std::filesystem::path& path,
                                             const EventLogSchema& schema = {});
std::vector<InteractionEvent> parse_event_log(std::istream& in, const EventLogSchema& schema);

/// Canonical JSON-lines writer; one event per line with fixed field order.
void write_event_log(std::ostream& out, std::span<const InteractionEvent> events);
void write_event_log(const std::filesystem::path& path, std::span<const InteractionEvent> events);

using ProfileTable = std::unordered_map<std::string, UserProfile>;

/// Sidecar of user profiles keyed by user_id (JSON lines).
ProfileTable load_profiles(const std::filesystem::path& path);
void write_profiles(const std::filesystem::path& path, std::span<const UserProfile> profiles);

// ---------------------------------------------------------------------------
// Sessionization

struct SessionizeOptions {
  /// Sessions without an exit close at min(request + timeout, horizon_end).
  Duration session_timeout = std::chrono::hours(24);
  /// Partitions processed concurrently; output is identical for any value.
  std::size_t threads = 1;
  const ProfileTable* profiles = nullptr;
};

/// Groups sorted events into one session per (user, live, request). Events
/// after horizon_end are not visible. Output is sorted by request time.
std::vector<ImpressionSession> sessionize(std::span<const InteractionEvent> events, Timestamp horizon_end,
                                          const SessionizeOptions& options = {});

/// Inverse of sessionize for uncensored data: emits the events a session was
/// built from, sorted by time.
std::vector<InteractionEvent> sessions_to_events(std::span<const ImpressionSession> sessions);

}  // namespace sliver
