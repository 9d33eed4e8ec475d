#include "sliver/events.hpp"

#include <algorithm>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>
#include <utility>

#include "sliver/errors.hpp"

namespace sliver {

namespace {

constexpr std::array<std::string_view, 6> kKindNames = {"Request", "Impression", "Click",
                                                        "Follow",  "Like",       "Exit"};
constexpr std::array<std::string_view, kNumTasks> kTaskNames = {"click", "follow", "like"};

std::string describe(const SessionKey& key) {
  std::ostringstream os;
  os << "session (user=" << key.user_id << ", live=" << key.live_id << ", request_ts=" << to_ms(key.request_ts)
     << "ms)";
  return os.str();
}

[[noreturn]] void reject(const SessionKey& key, const std::string& why) {
  throw InvalidSessionError(describe(key) + ": " + why);
}

std::optional<Task> task_of(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::kClick:
      return Task::kClick;
    case BehaviorKind::kFollow:
      return Task::kFollow;
    case BehaviorKind::kLike:
      return Task::kLike;
    default:
      return std::nullopt;
  }
}

std::string value_or_empty(const std::optional<std::string>& v) { return v ? *v : std::string{}; }

ImpressionSession open_session(const InteractionEvent& request, const ProfileTable* profiles) {
  ImpressionSession s;
  s.request_ts = request.ts;
  s.user.user_id = request.user_id;
  s.user.gender = value_or_empty(request.attrs.gender);
  s.user.age_bucket = value_or_empty(request.attrs.age_bucket);
  s.user.city = value_or_empty(request.attrs.city);
  if (profiles != nullptr) {
    if (auto it = profiles->find(request.user_id); it != profiles->end()) {
      const UserProfile& p = it->second;
      if (!request.attrs.gender) s.user.gender = p.gender;
      if (!request.attrs.age_bucket) s.user.age_bucket = p.age_bucket;
      if (!request.attrs.city) s.user.city = p.city;
    }
  }
  s.live.live_id = request.live_id;
  s.live.anchor_id = request.anchor_id;
  s.live.live_type = value_or_empty(request.attrs.live_type);
  s.live.anchor_gender = value_or_empty(request.attrs.anchor_gender);
  s.live.anchor_type = value_or_empty(request.attrs.anchor_type);
  s.live.snapshot_ts = request.ts;
  return s;
}

void apply_event(ImpressionSession& s, const InteractionEvent& e) {
  const SessionKey key = s.key();
  if (s.exit_ts) reject(key, std::string(to_string(e.kind)) + " after exit");
  switch (e.kind) {
    case BehaviorKind::kImpression:
      if (s.impression_ts) reject(key, "duplicate impression");
      s.impression_ts = e.ts;
      return;
    case BehaviorKind::kExit:
      if (!s.impression_ts) reject(key, "exit without impression");
      s.exit_ts = e.ts;
      return;
    default:
      break;
  }
  const Task task = *task_of(e.kind);
  if (!s.impression_ts) reject(key, std::string(to_string(task)) + " before impression");
  if (task == Task::kLike && !s.behavior(Task::kClick)) reject(key, "like before click");
  auto& slot = s.behavior_ts[index_of(task)];
  if (!slot) slot = e.ts;
}

void close_session(ImpressionSession& s, Timestamp horizon_end, Duration timeout) {
  if (s.impression_ts && !s.exit_ts) {
    const Timestamp boundary = std::min(s.request_ts + timeout, horizon_end);
    const SessionKey key = s.key();
    if (*s.impression_ts > boundary) reject(key, "impression after session timeout");
    for (const auto& ts : s.behavior_ts) {
      if (ts && *ts > boundary) reject(key, "behavior after session timeout");
    }
    s.censored = true;
    s.exit_ts = boundary;
  }
  validate_session(s);
}

struct Group {
  std::vector<std::size_t> events;
};

struct PartitionResult {
  std::vector<ImpressionSession> sessions;
  std::optional<std::pair<std::size_t, std::string>> error;  // (group order, message)
};

void sessionize_groups(std::span<const InteractionEvent> events, const std::vector<Group>& groups,
                       std::size_t partition, std::size_t stride, Timestamp horizon_end,
                       const SessionizeOptions& options, PartitionResult& out) {
  for (std::size_t g = partition; g < groups.size(); g += stride) {
    try {
      std::optional<ImpressionSession> current;
      for (std::size_t idx : groups[g].events) {
        const InteractionEvent& e = events[idx];
        if (e.kind == BehaviorKind::kRequest) {
          if (current) {
            close_session(*current, horizon_end, options.session_timeout);
            out.sessions.push_back(std::move(*current));
          }
          current = open_session(e, options.profiles);
          continue;
        }
        if (!current) {
          std::ostringstream os;
          os << "group (user=" << e.user_id << ", live=" << e.live_id << "): " << to_string(e.kind)
             << " at " << to_ms(e.ts) << "ms precedes any request";
          throw InvalidSessionError(os.str());
        }
        apply_event(*current, e);
      }
      if (current) {
        close_session(*current, horizon_end, options.session_timeout);
        out.sessions.push_back(std::move(*current));
      }
    } catch (const InvalidSessionError& err) {
      out.error = std::make_pair(g, std::string(err.what()));
      return;
    }
  }
}

void attach_click_history(std::vector<ImpressionSession>& sessions) {
  struct Click {
    Timestamp ts;
    std::size_t order;
    const std::string* anchor;
  };
  std::unordered_map<std::string, std::vector<Click>> clicks;
  std::unordered_map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    by_user[s.user.user_id].push_back(i);
    if (const auto& c = s.behavior(Task::kClick)) clicks[s.user.user_id].push_back({*c, i, &s.live.anchor_id});
  }
  for (auto& [user, idxs] : by_user) {
    auto it = clicks.find(user);
    if (it == clicks.end()) continue;
    auto& list = it->second;
    std::sort(list.begin(), list.end(),
              [](const Click& a, const Click& b) { return std::tie(a.ts, a.order) < std::tie(b.ts, b.order); });
    std::size_t seen = 0;
    for (std::size_t i : idxs) {
      auto& s = sessions[i];
      while (seen < list.size() && list[seen].ts < s.request_ts) ++seen;
      const std::size_t first = seen > kMaxClickHistory ? seen - kMaxClickHistory : 0;
      s.user.click_anchor_history.clear();
      for (std::size_t k = first; k < seen; ++k) s.user.click_anchor_history.push_back(*list[k].anchor);
    }
  }
}

}  // namespace

std::string_view to_string(BehaviorKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<BehaviorKind> parse_behavior_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<BehaviorKind>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Task task) { return kTaskNames[index_of(task)]; }

BehaviorKind behavior_of(Task task) {
  switch (task) {
    case Task::kClick:
      return BehaviorKind::kClick;
    case Task::kFollow:
      return BehaviorKind::kFollow;
    case Task::kLike:
      return BehaviorKind::kLike;
  }
  return BehaviorKind::kClick;
}

std::size_t SessionKeyHash::operator()(const SessionKey& key) const noexcept {
  std::size_t h = std::hash<std::string>{}(key.user_id);
  h ^= std::hash<std::string>{}(key.live_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= std::hash<std::int64_t>{}(to_ms(key.request_ts)) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

void validate_session(const ImpressionSession& s) {
  const SessionKey key = s.key();
  if (to_ms(s.request_ts) < 0) reject(key, "negative request timestamp");
  if (!s.impression_ts) {
    for (const auto& ts : s.behavior_ts) {
      if (ts) reject(key, "behavior without impression");
    }
    if (s.exit_ts) reject(key, "exit without impression");
    if (s.censored) reject(key, "unimpressed session marked censored");
    return;
  }
  if (*s.impression_ts < s.request_ts) reject(key, "impression before request");
  const auto& click = s.behavior(Task::kClick);
  const auto& like = s.behavior(Task::kLike);
  if (like && !click) reject(key, "like without click");
  if (like && *like < *click) reject(key, "like before click");
  for (const auto& ts : s.behavior_ts) {
    if (!ts) continue;
    if (*ts < *s.impression_ts) reject(key, "behavior before impression");
    if (s.exit_ts && *ts > *s.exit_ts) reject(key, "behavior after exit");
  }
  if (s.exit_ts && *s.exit_ts < *s.impression_ts) reject(key, "exit before impression");
  if (s.user.click_anchor_history.size() > kMaxClickHistory) reject(key, "click history exceeds cap");
  if (s.live.snapshot_ts > *s.impression_ts) reject(key, "live snapshot taken after impression");
}

EventualLabelTable eventual_labels_from_sessions(std::span<const ImpressionSession> sessions) {
  EventualLabelTable table;
  table.reserve(sessions.size());
  for (const auto& s : sessions) {
    if (!s.impressed() || s.censored) continue;
    EventualLabels labels;
    for (Task t : kAllTasks) labels.positive[index_of(t)] = s.behavior(t).has_value();
    table.emplace(s.key(), labels);
  }
  return table;
}

std::vector<ImpressionSession> sessionize(std::span<const InteractionEvent> events, Timestamp horizon_end,
                                          const SessionizeOptions& options) {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].ts < events[i - 1].ts) throw OrderError("sessionize: events are not sorted by timestamp");
  }

  std::vector<Group> groups;
  {
    std::unordered_map<std::string, std::size_t> index;
    std::string key;
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      if (e.ts > horizon_end) break;
      key.assign(e.user_id);
      key.push_back('\x1f');
      key.append(e.live_id);
      auto [it, inserted] = index.try_emplace(key, groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].events.push_back(i);
    }
  }

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, groups.size()));
  std::vector<PartitionResult> parts(threads);
  if (threads == 1) {
    sessionize_groups(events, groups, 0, 1, horizon_end, options, parts[0]);
  } else {
    std::vector<std::jthread> workers;
    workers.reserve(threads);
    for (std::size_t p = 0; p < threads; ++p) {
      workers.emplace_back([&, p] { sessionize_groups(events, groups, p, threads, horizon_end, options, parts[p]); });
    }
  }

  const PartitionResult* failed = nullptr;
  for (const auto& part : parts) {
    if (part.error && (failed == nullptr || part.error->first < failed->error->first)) failed = &part;
  }
  if (failed != nullptr) throw InvalidSessionError(failed->error->second);

  std::vector<ImpressionSession> sessions;
  for (auto& part : parts) {
    std::move(part.sessions.begin(), part.sessions.end(), std::back_inserter(sessions));
  }
  std::sort(sessions.begin(), sessions.end(), [](const ImpressionSession& a, const ImpressionSession& b) {
    return std::tie(a.request_ts, a.user.user_id, a.live.live_id) <
           std::tie(b.request_ts, b.user.user_id, b.live.live_id);
  });
  attach_click_history(sessions);
  return sessions;
}

std::vector<InteractionEvent> sessions_to_events(std::span<const ImpressionSession> sessions) {
  std::vector<InteractionEvent> events;
  events.reserve(sessions.size() * 4);
  auto attr = [](const std::string& v) -> std::optional<std::string> {
    if (v.empty()) return std::nullopt;
    return v;
  };
  for (const auto& s : sessions) {
    InteractionEvent base;
    base.user_id = s.user.user_id;
    base.live_id = s.live.live_id;
    base.anchor_id = s.live.anchor_id;

    InteractionEvent request = base;
    request.kind = BehaviorKind::kRequest;
    request.ts = s.request_ts;
    request.attrs.gender = attr(s.user.gender);
    request.attrs.age_bucket = attr(s.user.age_bucket);
    request.attrs.city = attr(s.user.city);
    request.attrs.live_type = attr(s.live.live_type);
    request.attrs.anchor_gender = attr(s.live.anchor_gender);
    request.attrs.anchor_type = attr(s.live.anchor_type);
    events.push_back(std::move(request));

    auto push = [&](BehaviorKind kind, Timestamp ts) {
      InteractionEvent e = base;
      e.kind = kind;
      e.ts = ts;
      events.push_back(std::move(e));
    };
    if (!s.impression_ts) continue;
    push(BehaviorKind::kImpression, *s.impression_ts);
    for (Task t : kAllTasks) {
      if (const auto& ts = s.behavior(t)) push(behavior_of(t), *ts);
    }
    if (s.exit_ts && !s.censored) push(BehaviorKind::kExit, *s.exit_ts);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) { return a.ts < b.ts; });
  return events;
}

}  // namespace sliver
