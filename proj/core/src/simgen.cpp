#include "sliver/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "sliver/errors.hpp"

namespace sliver {

namespace {

constexpr std::array<std::string_view, 8> kStateNames = {"gaming", "music", "chat",   "outdoor",
                                                         "shopping", "sports", "dance", "food"};

// Longest delay the generator will emit; keeps timestamp arithmetic far from overflow.
constexpr double kMaxDelayMs = 30.0 * 24 * 3600 * 1000;

double logit(double p) { return std::log(p / (1.0 - p)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  Duration delay(const LogNormal& d) {
    const double ms = std::min(std::exp(d.mu + d.sigma * normal()), kMaxDelayMs);
    return Duration{std::max<std::int64_t>(1, std::llround(ms))};
  }

 private:
  std::mt19937_64 rng_;
};

void check_probability_table(const std::vector<std::vector<double>>& table, std::size_t rows, std::size_t cols,
                             const char* name) {
  if (table.size() != rows) throw ConfigError(std::string("base_rates.") + name + ": wrong number of segments");
  for (const auto& row : table) {
    if (row.size() != cols) throw ConfigError(std::string("base_rates.") + name + ": ragged content-state table");
    for (double p : row) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("base_rates.") + name + ": probability outside [0,1]");
    }
  }
}

void check_lognormal(const LogNormal& d, const char* name) {
  if (!std::isfinite(d.mu) || !(d.sigma > 0.0) || !std::isfinite(d.sigma)) {
    throw ConfigError(std::string(name) + ": log-normal needs finite mu and sigma > 0");
  }
}

}  // namespace

double LogNormal::cdf(double ms) const {
  if (ms <= 0.0) return 0.0;
  return 0.5 * std::erfc(-(std::log(ms) - mu) / (sigma * std::numbers::sqrt2));
}

double LogNormal::quantile(double p) const {
  // Bisection on the cdf; only used for diagnostics and tests.
  double lo = mu - 12.0 * sigma;
  double hi = mu + 12.0 * sigma;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(std::exp(mid)) < p ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

const std::vector<std::vector<double>>& BaseRates::of(Task task) const {
  switch (task) {
    case Task::kClick:
      return click;
    case Task::kFollow:
      return follow;
    case Task::kLike:
      return like;
  }
  return click;
}

BaseRates default_base_rates() {
  BaseRates r;
  // Columns: gaming, music, chat, outdoor, shopping, sports. Each state has its own
  // overall appeal on top of the per-segment preferences.
  r.click = {
      {0.160, 0.180, 0.234, 0.042, 0.220, 0.056},  // F, young
      {0.080, 0.096, 0.286, 0.070, 0.300, 0.084},  // F, older
      {0.512, 0.060, 0.104, 0.098, 0.050, 0.364},  // M, young
      {0.224, 0.036, 0.156, 0.168, 0.080, 0.420},  // M, older
  };
  r.follow = {
      {0.032, 0.036, 0.052, 0.008, 0.030, 0.014},
      {0.016, 0.018, 0.065, 0.014, 0.040, 0.017},
      {0.112, 0.012, 0.019, 0.021, 0.010, 0.070},
      {0.048, 0.007, 0.033, 0.035, 0.015, 0.084},
  };
  r.like = {
      {0.20, 0.35, 0.25, 0.15, 0.18, 0.10},
      {0.12, 0.25, 0.30, 0.20, 0.22, 0.12},
      {0.35, 0.15, 0.12, 0.20, 0.08, 0.30},
      {0.18, 0.10, 0.20, 0.30, 0.10, 0.32},
  };
  return r;
}

void GeneratorConfig::validate() const {
  if (num_users == 0 || num_lives == 0 || num_anchors == 0) throw ConfigError("generator: zero users, lives or anchors");
  if (horizon <= Duration::zero()) throw ConfigError("generator: horizon must be positive");
  if (content_shift_period <= Duration::zero()) throw ConfigError("generator: content_shift_period must be positive");
  const std::size_t segments = num_segments();
  const std::size_t states = num_states();
  if (segments != kGenders.size() * 2) throw ConfigError("generator: base_rates must have 4 segment rows");
  if (states == 0 || states > kStateNames.size()) throw ConfigError("generator: between 1 and 8 content states");
  if (content_shifts && states < 2) throw ConfigError("generator: content shifts need at least two states");
  check_probability_table(base_rates.click, segments, states, "click");
  check_probability_table(base_rates.follow, segments, states, "follow");
  check_probability_table(base_rates.like, segments, states, "like");
  check_lognormal(delays.click, "delays.click");
  check_lognormal(delays.follow, "delays.follow");
  check_lognormal(delays.like_after_click, "delays.like_after_click");
  check_lognormal(impression_delay.body, "impression_delay");
  if (!(impression_delay.shift_ms >= 0.0)) throw ConfigError("impression_delay: shift must be >= 0");
  if (!(watch.engaged_mean_ms > 0.0) || !(watch.browse_mean_ms > 0.0)) throw ConfigError("watch: means must be > 0");
  if (!(requests_per_user_hour > 0.0)) throw ConfigError("generator: requests_per_user_hour must be > 0");
  if (!(unimpressed_fraction >= 0.0 && unimpressed_fraction <= 1.0)) {
    throw ConfigError("generator: unimpressed_fraction outside [0,1]");
  }
  if (!(room_quality_sd >= 0.0) || !(shift_effect_sd >= 0.0)) throw ConfigError("generator: negative offset sd");
  if (candidates_per_request == 0 || candidates_per_request > num_lives) {
    throw ConfigError("generator: candidates_per_request must be in [1, num_lives]");
  }
}

std::string content_state_name(std::size_t state) { return std::string(kStateNames.at(state)); }

std::size_t segment_of(std::string_view gender, std::string_view age_bucket) {
  const std::size_t g = gender == kGenders[1] ? 1 : 0;
  std::size_t age = 0;
  for (std::size_t i = 0; i < kAgeBuckets.size(); ++i) {
    if (kAgeBuckets[i] == age_bucket) age = i;
  }
  return 2 * g + (age >= 3 ? 1 : 0);
}

double behavior_probability(const BaseRates& rates, Task task, std::size_t segment, std::size_t state,
                            double offset) {
  const double p = rates.of(task).at(segment).at(state);
  if (p <= 0.0 || p >= 1.0) return p;
  return sigmoid(logit(p) + offset);
}

void GroundTruth::index() {
  room_index_.clear();
  for (std::size_t i = 0; i < rooms.size(); ++i) room_index_.emplace(rooms[i].live_id, i);
}

const RoomTrajectory& GroundTruth::room(std::string_view live_id) const {
  auto it = room_index_.find(std::string(live_id));
  if (it == room_index_.end()) throw LookupError("ground truth: unknown live_id '" + std::string(live_id) + "'");
  return rooms[it->second];
}

const ContentSegment& GroundTruth::content_at(std::string_view live_id, Timestamp ts) const {
  if (ts < kStreamEpoch) throw DomainError("ground truth: timestamp before stream epoch");
  const auto& segs = room(live_id).segments;
  auto it = std::upper_bound(segs.begin(), segs.end(), ts,
                             [](Timestamp t, const ContentSegment& s) { return t < s.start; });
  return *std::prev(it);
}

LiveRoomSnapshot GroundTruth::snapshot(std::string_view live_id, Timestamp ts) const {
  const auto& r = room(live_id);
  LiveRoomSnapshot snap;
  snap.live_id = r.live_id;
  snap.anchor_id = r.anchor_id;
  snap.anchor_gender = r.anchor_gender;
  snap.anchor_type = r.anchor_type;
  snap.live_type = state_names.at(content_at(live_id, ts).state);
  snap.snapshot_ts = ts;
  return snap;
}

double true_ctr(const GroundTruth& truth, std::string_view live_id, Timestamp ts) {
  const ContentSegment& c = truth.content_at(live_id, ts);
  double ctr = 0.0;
  for (std::size_t g = 0; g < truth.segment_shares.size(); ++g) {
    ctr += truth.segment_shares[g] * behavior_probability(truth.base_rates, Task::kClick, g, c.state, c.offset);
  }
  return ctr;
}

GeneratedLog generate(const GeneratorConfig& config) {
  config.validate();
  Sampler rng(config.seed);
  GeneratedLog log;
  GroundTruth& truth = log.truth;
  truth.base_rates = config.base_rates;
  const std::size_t states = config.num_states();
  for (std::size_t s = 0; s < states; ++s) truth.state_names.push_back(content_state_name(s));

  // Users.
  std::vector<std::size_t> user_segment(config.num_users);
  truth.segment_shares.assign(config.num_segments(), 0.0);
  log.profiles.reserve(config.num_users);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    UserProfile p;
    p.user_id = "u" + std::to_string(u);
    p.gender = std::string(kGenders[rng.index(kGenders.size())]);
    p.age_bucket = std::string(kAgeBuckets[rng.index(kAgeBuckets.size())]);
    p.city = std::string(kCities[rng.index(kCities.size())]);
    user_segment[u] = segment_of(p.gender, p.age_bucket);
    truth.segment_shares[user_segment[u]] += 1.0;
    log.profiles.push_back(std::move(p));
  }
  for (double& share : truth.segment_shares) share /= static_cast<double>(config.num_users);

  // Anchors and rooms.
  std::vector<std::pair<std::string, std::string>> anchor_attrs(config.num_anchors);
  for (auto& [gender, type] : anchor_attrs) {
    gender = std::string(kGenders[rng.index(kGenders.size())]);
    type = std::string(kAnchorTypes[rng.index(kAnchorTypes.size())]);
  }
  const Timestamp trajectory_end = kStreamEpoch + config.horizon + std::chrono::hours(6);
  const double shift_mean_ms = static_cast<double>(config.content_shift_period.count());
  std::vector<RoomTrajectory> rooms(config.num_lives);
  for (std::size_t r = 0; r < config.num_lives; ++r) {
    RoomTrajectory& room = rooms[r];
    const std::size_t anchor = r % config.num_anchors;
    room.live_id = "l" + std::to_string(r);
    room.anchor_id = "a" + std::to_string(anchor);
    room.anchor_gender = anchor_attrs[anchor].first;
    room.anchor_type = anchor_attrs[anchor].second;
    const double quality = config.room_quality_sd * rng.normal();
    std::uint32_t state = static_cast<std::uint32_t>(rng.index(states));
    room.segments.push_back({kStreamEpoch, state, quality + config.shift_effect_sd * rng.normal()});
    if (!config.content_shifts) continue;
    double t = 0.0;
    for (;;) {
      t += rng.exponential(shift_mean_ms);
      const Timestamp start = from_ms(static_cast<std::int64_t>(std::ceil(t)));
      if (start >= trajectory_end) break;
      state = static_cast<std::uint32_t>((state + 1 + rng.index(states - 1)) % states);
      const double offset = quality + config.shift_effect_sd * rng.normal();
      if (start == room.segments.back().start) {
        room.segments.back() = {start, state, offset};
      } else {
        room.segments.push_back({start, state, offset});
      }
    }
  }

  // Request arrivals: one Poisson process per user.
  struct Arrival {
    Timestamp ts;
    std::uint32_t user;
  };
  std::vector<Arrival> arrivals;
  const double inter_arrival_ms = 3'600'000.0 / config.requests_per_user_hour;
  const double horizon_ms = static_cast<double>(config.horizon.count());
  for (std::size_t u = 0; u < config.num_users; ++u) {
    for (double t = rng.exponential(inter_arrival_ms); t < horizon_ms; t += rng.exponential(inter_arrival_ms)) {
      arrivals.push_back({from_ms(static_cast<std::int64_t>(t)), static_cast<std::uint32_t>(u)});
    }
  }
  std::sort(arrivals.begin(), arrivals.end(),
            [](const Arrival& a, const Arrival& b) { return std::tie(a.ts, a.user) < std::tie(b.ts, b.user); });

  truth.rooms = rooms;  // copy before room order is used for indices
  truth.index();

  std::unordered_map<std::uint64_t, Timestamp> busy_until;
  std::vector<InteractionEvent> events;
  events.reserve(arrivals.size() * 4);
  constexpr int kMaxRoomDraws = 16;

  for (const Arrival& arrival : arrivals) {
    const std::uint32_t u = arrival.user;
    const Timestamp t = arrival.ts;

    std::size_t room_idx = 0;
    bool found = false;
    for (int attempt = 0; attempt < kMaxRoomDraws && !found; ++attempt) {
      room_idx = rng.index(config.num_lives);
      auto it = busy_until.find(static_cast<std::uint64_t>(u) * config.num_lives + room_idx);
      found = it == busy_until.end() || it->second < t;
    }
    if (!found) continue;

    std::vector<std::uint32_t> candidates{static_cast<std::uint32_t>(room_idx)};
    while (candidates.size() < config.candidates_per_request) {
      const auto c = static_cast<std::uint32_t>(rng.index(config.num_lives));
      if (std::find(candidates.begin(), candidates.end(), c) == candidates.end()) candidates.push_back(c);
    }

    // Fixed number of draws per request so outcomes never shift later randomness.
    const double tau_ms = config.impression_delay.shift_ms +
                          std::min(std::exp(config.impression_delay.body.mu +
                                            config.impression_delay.body.sigma * rng.normal()),
                                   kMaxDelayMs);
    const bool impressed = rng.uniform() >= config.unimpressed_fraction;
    const double u_click = rng.uniform();
    const double u_follow = rng.uniform();
    const double u_like = rng.uniform();
    const Duration click_delay = rng.delay(config.delays.click);
    const Duration follow_delay = rng.delay(config.delays.follow);
    const Duration like_delay = rng.delay(config.delays.like_after_click);
    const double watch_u = rng.uniform();

    const RoomTrajectory& room = rooms[room_idx];
    const UserProfile& profile = log.profiles[u];
    const SessionKey key{profile.user_id, room.live_id, t};

    InteractionEvent base;
    base.user_id = profile.user_id;
    base.live_id = room.live_id;
    base.anchor_id = room.anchor_id;

    InteractionEvent request = base;
    request.kind = BehaviorKind::kRequest;
    request.ts = t;
    request.attrs.gender = profile.gender;
    request.attrs.age_bucket = profile.age_bucket;
    request.attrs.city = profile.city;
    request.attrs.live_type = truth.state_names[truth.content_at(room.live_id, t).state];
    request.attrs.anchor_gender = room.anchor_gender;
    request.attrs.anchor_type = room.anchor_type;
    events.push_back(std::move(request));

    EventualLabels labels;
    Timestamp end = t;
    if (impressed) {
      const Timestamp imp = t + Duration{std::max<std::int64_t>(1, std::llround(tau_ms))};
      const ContentSegment& content = truth.content_at(room.live_id, imp);
      const std::size_t seg = user_segment[u];
      auto prob = [&](Task task) {
        return behavior_probability(config.base_rates, task, seg, content.state, content.offset);
      };
      const bool click = u_click < prob(Task::kClick);
      const bool follow = u_follow < prob(Task::kFollow);
      const bool like = click && u_like < prob(Task::kLike);
      labels.positive = {click, follow, like};

      auto push = [&](BehaviorKind kind, Timestamp ts) {
        InteractionEvent e = base;
        e.kind = kind;
        e.ts = ts;
        events.push_back(std::move(e));
      };
      push(BehaviorKind::kImpression, imp);
      Timestamp last = imp;
      if (click) {
        push(BehaviorKind::kClick, imp + click_delay);
        last = std::max(last, imp + click_delay);
      }
      if (follow) {
        push(BehaviorKind::kFollow, imp + follow_delay);
        last = std::max(last, imp + follow_delay);
      }
      if (like) {
        push(BehaviorKind::kLike, imp + click_delay + like_delay);
        last = std::max(last, imp + click_delay + like_delay);
      }
      const bool engaged = click || follow;
      const double watch_mean = engaged ? config.watch.engaged_mean_ms : config.watch.browse_mean_ms;
      const auto watch = std::max<std::int64_t>(1, std::llround(-watch_mean * std::log1p(-watch_u)));
      end = last + Duration{watch};
      push(BehaviorKind::kExit, end);
    }
    busy_until[static_cast<std::uint64_t>(u) * config.num_lives + room_idx] = end;
    truth.labels.emplace(key, labels);
    truth.candidates.emplace(key, std::move(candidates));
  }

  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) { return a.ts < b.ts; });
  log.events = std::move(events);
  return log;
}

}  // namespace sliver
