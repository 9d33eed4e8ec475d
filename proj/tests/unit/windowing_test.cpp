#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sliver/errors.hpp"
#include "sliver/simgen.hpp"
#include "sliver/windowing.hpp"

namespace sliver {
namespace {

constexpr auto P = TaskLabel::kPositive;
constexpr auto N = TaskLabel::kNegative;
constexpr auto A = TaskLabel::kAbsent;
using Labels = std::array<TaskLabel, kNumTasks>;

struct SessionSpec {
  std::int64_t request = 0;
  std::optional<std::int64_t> impression{}, click{}, follow{}, like{}, exit{};
  bool censored = false;
};

ImpressionSession make(const SessionSpec& spec) {
  ImpressionSession s;
  s.user.user_id = "u";
  s.live.live_id = "l";
  s.request_ts = from_ms(spec.request);
  s.live.snapshot_ts = s.request_ts;
  auto opt = [](std::optional<std::int64_t> v) -> std::optional<Timestamp> {
    if (!v) return std::nullopt;
    return from_ms(*v);
  };
  s.impression_ts = opt(spec.impression);
  s.behavior_ts = {opt(spec.click), opt(spec.follow), opt(spec.like)};
  s.exit_ts = opt(spec.exit);
  s.censored = spec.censored;
  validate_session(s);
  return s;
}

TEST(WindowIndex, Examples) {
  auto r = window_index(kStreamEpoch, Duration{30000}, from_ms(75000));
  EXPECT_EQ(r.k, 3);
  EXPECT_EQ(r.mu, from_ms(90000));
  r = window_index(from_ms(1234), Duration{30000}, from_ms(1234));
  EXPECT_EQ(r.k, 1);
  EXPECT_EQ(r.mu, from_ms(31234));
  r = window_index(kStreamEpoch, Duration{30000}, from_ms(90000));
  EXPECT_EQ(r.k, 4);
  EXPECT_EQ(r.mu, from_ms(120000));
}

TEST(WindowIndex, Errors) {
  EXPECT_THROW(window_index(from_ms(10), Duration{30000}, from_ms(9)), DomainError);
  EXPECT_THROW(window_index(kStreamEpoch, Duration{0}, from_ms(9)), DomainError);
}

TEST(FixedFromRequest, FakeNegativeFollow) {
  const auto s = make({.request = 0, .impression = 120000, .click = 300000, .follow = 4000000, .exit = 4100000});
  const auto out = label_fixed_from_request(s, std::chrono::hours(1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].emit_ts, from_ms(3600000));
  EXPECT_EQ(out[0].labels, (Labels{P, N, N}));
  EXPECT_FALSE(out[0].window_id);
}

TEST(FixedFromRequest, NoImpressionInsideWindow) {
  EXPECT_TRUE(label_fixed_from_request(make({.request = 0}), std::chrono::hours(1)).empty());
  const auto late = make({.request = 0, .impression = 3600000, .exit = 3700000});
  EXPECT_TRUE(label_fixed_from_request(late, std::chrono::hours(1)).empty());
}

TEST(FixedFromRequest, NoClickMeansLikeAbsent) {
  const auto s = make({.request = 0, .impression = 100000, .exit = 200000});
  const auto out = label_fixed_from_request(s, std::chrono::hours(1));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].labels, (Labels{N, N, A}));
}

TEST(FixedFromImpression, Examples) {
  const auto w = std::chrono::minutes(5);
  auto out = label_fixed_from_impression(make({.impression = 100000, .click = 150000, .follow = 500000, .exit = 600000}), w);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].emit_ts, from_ms(400000));
  EXPECT_EQ(out[0].label(Task::kClick), P);
  EXPECT_EQ(out[0].label(Task::kFollow), N);

  out = label_fixed_from_impression(make({.impression = 100000, .click = 150000, .like = 350000, .exit = 600000}), w);
  EXPECT_EQ(out[0].label(Task::kLike), P);

  out = label_fixed_from_impression(make({.impression = 100000, .exit = 120000}), w);
  EXPECT_EQ(out[0].emit_ts, from_ms(400000));
  EXPECT_EQ(out[0].labels, (Labels{N, N, A}));

  EXPECT_TRUE(label_fixed_from_impression(make({.request = 0}), w).empty());
}

TEST(FixedFromImpression, BoundaryBehaviorCountsAsOutside) {
  const auto w = std::chrono::minutes(5);
  const auto out = label_fixed_from_impression(make({.impression = 100000, .click = 400000, .exit = 500000}), w);
  EXPECT_EQ(out[0].labels, (Labels{N, N, A}));
}

TEST(Sliver, PositivesAndExitNegative) {
  const auto s = make({.impression = 95000, .click = 110000, .follow = 200000, .exit = 250000});
  const auto out = label_sliver(s, std::chrono::seconds(30), kStreamEpoch);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].emit_ts, from_ms(120000));
  EXPECT_EQ(out[0].labels, (Labels{P, A, A}));
  EXPECT_EQ(out[0].window_id, 4);
  EXPECT_EQ(out[1].emit_ts, from_ms(210000));
  EXPECT_EQ(out[1].labels, (Labels{A, P, A}));
  EXPECT_EQ(out[2].emit_ts, from_ms(270000));
  EXPECT_EQ(out[2].labels, (Labels{A, A, N}));
}

TEST(Sliver, ExitOnlyNegatives) {
  const auto out = label_sliver(make({.impression = 95000, .exit = 130000}), std::chrono::seconds(30), kStreamEpoch);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].emit_ts, from_ms(150000));
  EXPECT_EQ(out[0].labels, (Labels{N, N, A}));
}

TEST(Sliver, ClickAndExitInSameWindow) {
  const auto out =
      label_sliver(make({.impression = 95000, .click = 110000, .exit = 115000}), std::chrono::seconds(30), kStreamEpoch);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].emit_ts, from_ms(120000));
  EXPECT_EQ(out[0].labels, (Labels{P, N, N}));
}

TEST(Sliver, CensoredSessionsEmitPositivesOnly) {
  const auto s = make({.impression = 95000, .click = 110000, .exit = 500000, .censored = true});
  const auto out = label_sliver(s, std::chrono::seconds(30), kStreamEpoch);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].labels, (Labels{P, A, A}));
  const auto quiet = make({.impression = 95000, .exit = 500000, .censored = true});
  EXPECT_TRUE(label_sliver(quiet, std::chrono::seconds(30), kStreamEpoch).empty());
}

TEST(Sliver, GridOriginShiftsWindows) {
  const auto out =
      label_sliver(make({.impression = 95000, .click = 110000, .exit = 300000}), std::chrono::seconds(30), from_ms(5000));
  ASSERT_FALSE(out.empty());
  EXPECT_EQ(out[0].emit_ts, from_ms(125000));
}

TEST(Policies, NamesAndValidation) {
  EXPECT_EQ(paradigm_name(policy_from_name("one-hour")), "one-hour");
  EXPECT_EQ(std::get<FixedFromImpression>(policy_from_name("five-minute")).w, std::chrono::minutes(5));
  const auto sliding = std::get<Sliding>(policy_from_name("sliver", Duration{1000}, from_ms(7)));
  EXPECT_EQ(sliding.w, Duration{1000});
  EXPECT_EQ(sliding.t_uni, from_ms(7));
  EXPECT_THROW(policy_from_name("two-hour"), ConfigError);
  EXPECT_THROW(validate_policy(FixedFromRequest{Duration{0}}), ConfigError);
  for (auto l : {P, N, A}) EXPECT_EQ(parse_task_label(to_string(l)), l);
}

// ---------------------------------------------------------------------------
// Oracle equivalence over randomized sessions

std::vector<ImpressionSession> random_sessions(std::size_t n, std::uint64_t seed,
                                               const testing::RandomSessionOptions& o = {}) {
  std::mt19937_64 rng(seed);
  std::vector<ImpressionSession> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(testing::random_session(rng, i, o));
    validate_session(out.back());
  }
  return out;
}

TEST(OracleEquivalence, FixedFromRequest) {
  std::mt19937_64 rng(17);
  const auto sessions = random_sessions(20'000, 1);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const std::int64_t w = std::uniform_int_distribution<std::int64_t>(1, 200)(rng) * 1000;
    ASSERT_EQ(testing::reduce_sorted(label_fixed_from_request(sessions[i], Duration{w})),
              testing::oracle_fixed_from_request(sessions[i], w))
        << "session " << i << " w=" << w;
  }
}

TEST(OracleEquivalence, FixedFromImpression) {
  std::mt19937_64 rng(18);
  const auto sessions = random_sessions(20'000, 2);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const std::int64_t w = std::uniform_int_distribution<std::int64_t>(1, 200)(rng) * 1000;
    ASSERT_EQ(testing::reduce_sorted(label_fixed_from_impression(sessions[i], Duration{w})),
              testing::oracle_fixed_from_impression(sessions[i], w))
        << "session " << i << " w=" << w;
  }
}

TEST(OracleEquivalence, Sliver) {
  std::mt19937_64 rng(19);
  const auto sessions = random_sessions(20'000, 3);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const std::int64_t w = std::uniform_int_distribution<std::int64_t>(1, 12)(rng) * 5000;
    const std::int64_t t_uni = std::uniform_int_distribution<std::int64_t>(0, to_ms(sessions[i].request_ts))(rng);
    ASSERT_EQ(testing::reduce_sorted(label_sliver(sessions[i], Duration{w}, from_ms(t_uni))),
              testing::oracle_sliver(sessions[i], w, t_uni))
        << "session " << i << " w=" << w << " t_uni=" << t_uni;
  }
}

// ---------------------------------------------------------------------------
// Stream properties

TEST(ProduceStream, EmptyInput) {
  EXPECT_TRUE(produce_stream({}, Sliding{}).empty());
}

TEST(ProduceStream, InterleavedSessionsAreMuSorted) {
  std::vector<ImpressionSession> sessions = {
      make({.request = 0, .impression = 1000, .click = 100000, .exit = 200000}),
      make({.request = 5000, .impression = 6000, .click = 20000, .exit = 150000}),
  };
  sessions[1].user.user_id = "v";
  const auto out = produce_stream(sessions, Sliding{});
  ASSERT_EQ(out.size(), 4u);
  for (std::size_t i = 1; i < out.size(); ++i) EXPECT_LE(out[i - 1].emit_ts, out[i].emit_ts);
  EXPECT_EQ(out[0].session, 1u);
  EXPECT_EQ(out[1].session, 0u);
}

TEST(ProduceStream, TiesBrokenByRequestTime) {
  std::vector<ImpressionSession> sessions = {
      make({.request = 0, .impression = 1000, .exit = 10000}),
      make({.request = 2000, .impression = 3000, .exit = 12000}),
  };
  sessions[1].user.user_id = "v";
  const auto out = produce_stream(sessions, Sliding{});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].emit_ts, out[1].emit_ts);
  EXPECT_EQ(out[0].session, 0u);
}

TEST(ProduceStream, HorizonDropsLateSamples) {
  const std::vector<ImpressionSession> sessions = {make({.request = 0, .impression = 1000, .exit = 10000})};
  StreamOptions options;
  options.horizon_end = from_ms(299'999);
  EXPECT_TRUE(produce_stream(sessions, FixedFromRequest{std::chrono::minutes(5)}, options).empty());
  options.horizon_end = from_ms(300'000);
  EXPECT_EQ(produce_stream(sessions, FixedFromRequest{std::chrono::minutes(5)}, options).size(), 1u);
}

TEST(ProduceStream, GridOriginAfterRequestIsRejected) {
  const std::vector<ImpressionSession> sessions = {make({.request = 0, .impression = 1000, .exit = 10000})};
  EXPECT_THROW(produce_stream(sessions, Sliding{Duration{30000}, from_ms(1)}), DomainError);
}

class GeneratedStream : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    GeneratorConfig c;
    c.num_users = 4000;
    c.num_lives = 30;
    c.horizon = std::chrono::hours(6);
    log_ = new GeneratedLog(generate(c));
    sessions_ = new std::vector<ImpressionSession>(sessionize(log_->events, kStreamEpoch + c.horizon));
  }
  static void TearDownTestSuite() {
    delete sessions_;
    delete log_;
  }
  static GeneratedLog* log_;
  static std::vector<ImpressionSession>* sessions_;
};
GeneratedLog* GeneratedStream::log_ = nullptr;
std::vector<ImpressionSession>* GeneratedStream::sessions_ = nullptr;

TEST_F(GeneratedStream, SliverPositivesWithinOneWindow) {
  const auto stream = produce_stream(*sessions_, Sliding{});
  ASSERT_GT(stream.size(), 10'000u);
  for (const auto& sample : stream) {
    const auto& s = (*sessions_)[sample.session];
    for (Task t : kAllTasks) {
      if (sample.label(t) != P) continue;
      const auto delay = sample.emit_ts - *s.behavior(t);
      EXPECT_GT(delay, Duration::zero());
      EXPECT_LE(delay, std::chrono::seconds(30));
    }
  }
}

TEST_F(GeneratedStream, FixedWindowsEmitAtExactOffsets) {
  for (const auto& sample : produce_stream(*sessions_, FixedFromRequest{})) {
    EXPECT_EQ(sample.emit_ts - (*sessions_)[sample.session].request_ts, std::chrono::hours(1));
  }
  for (const auto& sample : produce_stream(*sessions_, FixedFromImpression{})) {
    EXPECT_EQ(sample.emit_ts - *(*sessions_)[sample.session].impression_ts, std::chrono::minutes(5));
  }
}

// Every timestamp that decides a label is strictly before μ.
TEST_F(GeneratedStream, NoInformationFromTheFuture) {
  for (const WindowPolicy& policy : {WindowPolicy{FixedFromRequest{}}, WindowPolicy{FixedFromImpression{}},
                                     WindowPolicy{Sliding{}}}) {
    for (const auto& sample : produce_stream(*sessions_, policy)) {
      const auto& s = (*sessions_)[sample.session];
      EXPECT_LT(*s.impression_ts, sample.emit_ts);
      EXPECT_LE(s.live.snapshot_ts, sample.emit_ts);
      for (Task t : kAllTasks) {
        if (sample.label(t) == P) {
          EXPECT_LT(*s.behavior(t), sample.emit_ts);
        }
      }
      if (std::holds_alternative<Sliding>(policy)) {
        for (Task t : kAllTasks) {
          if (sample.label(t) == N) {
            EXPECT_FALSE(s.censored);
            EXPECT_LT(*s.exit_ts, sample.emit_ts);
          }
        }
      }
    }
  }
}

TEST_F(GeneratedStream, EverySampleCarriesALabel) {
  for (const auto& sample : produce_stream(*sessions_, Sliding{})) {
    EXPECT_TRUE(testing::any_label(sample.labels));
  }
}

TEST_F(GeneratedStream, DeterministicAndThreadInvariant) {
  for (const WindowPolicy& policy : {WindowPolicy{FixedFromRequest{}}, WindowPolicy{Sliding{}}}) {
    const auto a = produce_stream(*sessions_, policy);
    EXPECT_EQ(produce_stream(*sessions_, policy), a);
    StreamOptions threaded;
    threaded.threads = 3;
    EXPECT_EQ(produce_stream(*sessions_, policy, threaded), a);
  }
}

TEST_F(GeneratedStream, SampleFileRoundTrips) {
  const auto stream = produce_stream(*sessions_, Sliding{});
  std::stringstream buf;
  write_samples(buf, stream, *sessions_);
  EXPECT_EQ(read_samples(buf, *sessions_), stream);
}

TEST(SampleFile, RejectsBadHeaderRowsAndUnknownSessions) {
  const std::vector<ImpressionSession> sessions = {make({.request = 0, .impression = 1000, .exit = 10000})};
  std::istringstream bad_header("user,live\n");
  EXPECT_THROW(read_samples(bad_header, sessions), SchemaError);

  std::istringstream bad_row(
      "user_id,live_id,request_ts_ms,mu_ms,window_id,click,follow,like,snapshot_ts_ms\n"
      "u,l,0,30000,1,+1,maybe,absent,0\n");
  EXPECT_THROW(read_samples(bad_row, sessions), ValidationError);

  std::istringstream unknown(
      "user_id,live_id,request_ts_ms,mu_ms,window_id,click,follow,like,snapshot_ts_ms\n"
      "x,l,0,30000,1,+1,-1,absent,0\n");
  EXPECT_THROW(read_samples(unknown, sessions), LookupError);
}

}  // namespace
}  // namespace sliver
