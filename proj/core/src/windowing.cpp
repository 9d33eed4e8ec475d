#include <algorithm>
#include <thread>
#include <tuple>

#include "sliver/errors.hpp"
#include "sliver/windowing.hpp"

namespace sliver {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool inside_open(const std::optional<Timestamp>& ts, Timestamp lo, Timestamp hi) {
  return ts && *ts > lo && *ts < hi;
}

LabeledSample make_sample(const ImpressionSession& s, std::size_t index, Timestamp mu) {
  LabeledSample out;
  out.session = index;
  out.emit_ts = mu;
  out.snapshot_ts = s.live.snapshot_ts;
  return out;
}

// Shared case analysis of the two fixed windows over the open interval (lo, hi).
LabeledSample label_fixed(const ImpressionSession& s, std::size_t index, Timestamp lo, Timestamp hi) {
  LabeledSample out = make_sample(s, index, hi);
  for (Task task : {Task::kClick, Task::kFollow}) {
    out.labels[index_of(task)] = inside_open(s.behavior(task), lo, hi) ? TaskLabel::kPositive : TaskLabel::kNegative;
  }
  if (inside_open(s.behavior(Task::kClick), lo, hi)) {
    out.labels[index_of(Task::kLike)] =
        inside_open(s.behavior(Task::kLike), lo, hi) ? TaskLabel::kPositive : TaskLabel::kNegative;
  }
  return out;
}

}  // namespace

void validate_policy(const WindowPolicy& policy) {
  const Duration w = std::visit([](const auto& p) { return p.w; }, policy);
  if (w <= Duration::zero()) throw ConfigError("window size must be positive");
}

std::string_view paradigm_name(const WindowPolicy& policy) {
  return std::visit(Overloaded{[](const FixedFromRequest&) { return std::string_view("one-hour"); },
                               [](const FixedFromImpression&) { return std::string_view("five-minute"); },
                               [](const Sliding&) { return std::string_view("sliver"); }},
                    policy);
}

WindowPolicy policy_from_name(std::string_view name, std::optional<Duration> window, std::optional<Timestamp> t_uni) {
  WindowPolicy policy;
  if (name == "one-hour") {
    policy = FixedFromRequest{window.value_or(FixedFromRequest{}.w)};
  } else if (name == "five-minute") {
    policy = FixedFromImpression{window.value_or(FixedFromImpression{}.w)};
  } else if (name == "sliver") {
    policy = Sliding{window.value_or(Sliding{}.w), t_uni.value_or(kStreamEpoch)};
  } else {
    throw ConfigError("unknown paradigm '" + std::string(name) + "' (expected one-hour, five-minute or sliver)");
  }
  validate_policy(policy);
  return policy;
}

std::string_view to_string(TaskLabel label) {
  switch (label) {
    case TaskLabel::kPositive: return "+1";
    case TaskLabel::kNegative: return "-1";
    case TaskLabel::kAbsent: break;
  }
  return "absent";
}

std::optional<TaskLabel> parse_task_label(std::string_view text) {
  if (text == "+1" || text == "1") return TaskLabel::kPositive;
  if (text == "-1") return TaskLabel::kNegative;
  if (text == "absent" || text.empty()) return TaskLabel::kAbsent;
  return std::nullopt;
}

WindowIndex window_index(Timestamp t_uni, Duration w, Timestamp ts) {
  if (w <= Duration::zero()) throw DomainError("window size must be positive");
  if (ts < t_uni) throw DomainError("timestamp precedes the window origin");
  const std::int64_t k = (ts - t_uni) / w + 1;
  return {k, t_uni + k * w};
}

std::vector<LabeledSample> label_fixed_from_request(const ImpressionSession& s, Duration w, std::size_t index) {
  if (!s.impression_ts || *s.impression_ts - s.request_ts >= w) return {};
  return {label_fixed(s, index, s.request_ts, s.request_ts + w)};
}

std::vector<LabeledSample> label_fixed_from_impression(const ImpressionSession& s, Duration w, std::size_t index) {
  if (!s.impression_ts) return {};
  return {label_fixed(s, index, *s.impression_ts, *s.impression_ts + w)};
}

std::vector<LabeledSample> label_sliver(const ImpressionSession& s, Duration w, Timestamp t_uni, std::size_t index) {
  if (!s.impression_ts) return {};
  // Windows that carry a label, in increasing k; at most four.
  std::array<WindowIndex, kNumTasks + 1> marks{};
  std::size_t n = 0;
  for (Task task : kAllTasks) {
    if (const auto& ts = s.behavior(task)) marks[n++] = window_index(t_uni, w, *ts);
  }
  std::optional<WindowIndex> exit_window;
  if (!s.censored && s.exit_ts) {
    exit_window = window_index(t_uni, w, *s.exit_ts);
    marks[n++] = *exit_window;
  }
  std::sort(marks.begin(), marks.begin() + n, [](const WindowIndex& a, const WindowIndex& b) { return a.k < b.k; });

  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && marks[i].k == marks[i - 1].k) continue;
    const WindowIndex win = marks[i];
    const bool at_exit = exit_window && exit_window->k == win.k;
    LabeledSample sample = make_sample(s, index, win.mu);
    sample.window_id = win.k;
    for (Task task : kAllTasks) {
      const auto& ts = s.behavior(task);
      TaskLabel label = TaskLabel::kAbsent;
      if (ts) {
        if (window_index(t_uni, w, *ts).k == win.k) label = TaskLabel::kPositive;
      } else if (at_exit) {
        const auto& click = s.behavior(Task::kClick);
        if (!in_post_click_space(task) || (click && *click < win.mu)) label = TaskLabel::kNegative;
      }
      sample.labels[index_of(task)] = label;
    }
    if (std::any_of(sample.labels.begin(), sample.labels.end(), [](TaskLabel l) { return l != TaskLabel::kAbsent; })) {
      out.push_back(sample);
    }
  }
  return out;
}

std::vector<LabeledSample> label_session(const ImpressionSession& s, const WindowPolicy& policy, std::size_t index) {
  return std::visit(Overloaded{[&](const FixedFromRequest& p) { return label_fixed_from_request(s, p.w, index); },
                               [&](const FixedFromImpression& p) { return label_fixed_from_impression(s, p.w, index); },
                               [&](const Sliding& p) { return label_sliver(s, p.w, p.t_uni, index); }},
                    policy);
}

std::vector<LabeledSample> produce_stream(std::span<const ImpressionSession> sessions, const WindowPolicy& policy,
                                          const StreamOptions& options) {
  validate_policy(policy);
  if (const auto* sliding = std::get_if<Sliding>(&policy)) {
    for (const auto& s : sessions) {
      if (s.request_ts < sliding->t_uni) throw DomainError("sliding-window origin is after the first request");
    }
  }

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, sessions.size()));
  std::vector<std::vector<LabeledSample>> parts(threads);
  auto work = [&](std::size_t part) {
    const std::size_t begin = sessions.size() * part / threads;
    const std::size_t end = sessions.size() * (part + 1) / threads;
    for (std::size_t i = begin; i < end; ++i) {
      for (auto& sample : label_session(sessions[i], policy, i)) {
        if (!options.horizon_end || sample.emit_ts <= *options.horizon_end) parts[part].push_back(sample);
      }
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t p = 0; p < threads; ++p) pool.emplace_back(work, p);
  }

  std::vector<LabeledSample> out;
  for (auto& part : parts) out.insert(out.end(), part.begin(), part.end());
  std::stable_sort(out.begin(), out.end(), [&](const LabeledSample& a, const LabeledSample& b) {
    const auto& sa = sessions[a.session];
    const auto& sb = sessions[b.session];
    return std::tie(a.emit_ts, sa.request_ts, sa.user.user_id, sa.live.live_id, a.session) <
           std::tie(b.emit_ts, sb.request_ts, sb.user.user_id, sb.live.live_id, b.session);
  });
  return out;
}

}  // namespace sliver
