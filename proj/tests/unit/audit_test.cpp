#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sliver/errors.hpp"
#include "sliver/simgen.hpp"
#include "sliver/windowing.hpp"

namespace sliver {
namespace {

ImpressionSession session(std::string user, std::int64_t imp, std::optional<std::int64_t> click, std::int64_t exit) {
  ImpressionSession s;
  s.user.user_id = std::move(user);
  s.live.live_id = "l";
  s.request_ts = from_ms(0);
  s.impression_ts = from_ms(imp);
  if (click) s.behavior_ts[0] = from_ms(*click);
  s.exit_ts = from_ms(exit);
  return s;
}

TEST(Audit, PerfectLabelsScoreOne) {
  const std::vector<ImpressionSession> sessions = {session("a", 1000, 2000, 5000), session("b", 1000, {}, 5000)};
  const auto truth = eventual_labels_from_sessions(sessions);
  const auto samples = produce_stream(sessions, FixedFromImpression{});
  const auto report = audit_label_accuracy(samples, sessions, truth, default_accuracy_buckets());
  const auto& click = report.overall[index_of(Task::kClick)];
  EXPECT_EQ(click.labeled, 2u);
  EXPECT_EQ(click.accuracy(), 1.0);
  EXPECT_EQ(click.positive_precision(), 1.0);
  EXPECT_EQ(click.negative_precision(), 1.0);
  EXPECT_EQ(report.excluded, 0u);
}

TEST(Audit, FakeNegativeLowersAccuracy) {
  const std::vector<ImpressionSession> sessions = {session("a", 1000, 400000, 500000), session("b", 1000, 2000, 5000)};
  const auto truth = eventual_labels_from_sessions(sessions);
  const auto samples = produce_stream(sessions, FixedFromImpression{});
  const auto report = audit_label_accuracy(samples, sessions, truth, default_accuracy_buckets());
  const auto& click = report.overall[index_of(Task::kClick)];
  EXPECT_EQ(click.accuracy(), 0.5);
  EXPECT_EQ(click.negative_precision(), 0.0);
  EXPECT_EQ(click.eventual_positive_accuracy(), 0.5);
  // μ − impression = 5 min lands in the [5 min, 10 min) bucket.
  EXPECT_EQ(report.buckets[4].lo, std::chrono::minutes(5));
  EXPECT_EQ(report.buckets[4].tasks[0].labeled, 2u);
}

TEST(Audit, CensoredAndUnknownSessionsAreExcluded) {
  std::vector<ImpressionSession> sessions = {session("a", 1000, 2000, 5000), session("b", 1000, 2000, 5000)};
  sessions[1].censored = true;
  auto truth = eventual_labels_from_sessions(sessions);
  sessions.push_back(session("c", 1000, {}, 5000));
  const auto samples = produce_stream(sessions, FixedFromImpression{});
  const auto report = audit_label_accuracy(samples, sessions, truth, default_accuracy_buckets());
  EXPECT_EQ(report.excluded, 2u);
  EXPECT_EQ(report.overall[0].labeled, 1u);
}

TEST(Audit, BadBucketEdges) {
  const std::vector<Duration> not_zero = {Duration{5}};
  const std::vector<Duration> unsorted = {Duration{0}, Duration{10}, Duration{10}};
  EXPECT_THROW(audit_label_accuracy({}, {}, {}, not_zero), DomainError);
  EXPECT_THROW(audit_label_accuracy({}, {}, {}, unsorted), DomainError);
}

TEST(Audit, BucketsPartitionTheSamples) {
  GeneratorConfig c;
  c.num_users = 3000;
  c.horizon = std::chrono::hours(4);
  const auto log = generate(c);
  const auto sessions = sessionize(log.events, kStreamEpoch + c.horizon);
  const auto samples = produce_stream(sessions, Sliding{});
  const auto report = audit_label_accuracy(samples, sessions, log.truth.labels, default_accuracy_buckets());
  for (Task t : kAllTasks) {
    TaskAccuracy sum;
    for (const auto& b : report.buckets) sum += b.tasks[index_of(t)];
    EXPECT_EQ(sum.labeled, report.overall[index_of(t)].labeled);
    EXPECT_EQ(sum.correct, report.overall[index_of(t)].correct);
  }
}

TEST(Audit, SliverIsExactOnUncensoredSessions) {
  GeneratorConfig c;
  c.num_users = 5000;
  c.horizon = std::chrono::hours(4);
  const auto log = generate(c);
  const auto sessions = sessionize(log.events, kStreamEpoch + c.horizon);
  const auto samples = produce_stream(sessions, Sliding{});
  const auto report = audit_label_accuracy(samples, sessions, log.truth.labels, default_accuracy_buckets());
  EXPECT_GT(report.excluded, 0u);
  for (Task t : kAllTasks) {
    const auto& a = report.overall[index_of(t)];
    ASSERT_GT(a.positives, 0u);
    ASSERT_GT(a.negatives, 0u);
    EXPECT_EQ(a.accuracy(), 1.0);
    EXPECT_EQ(a.positive_precision(), 1.0);
    EXPECT_EQ(a.negative_precision(), 1.0);
  }
}

TEST(AccuracyCurve, NonDecreasingInWindow) {
  GeneratorConfig c;
  c.num_users = 8000;
  const auto log = generate(c);
  const auto sessions = sessionize(log.events, kStreamEpoch + c.horizon);
  using namespace std::chrono;
  const std::vector<Duration> windows = {minutes(1), minutes(2), minutes(5), minutes(10), minutes(30)};
  const auto curve = accuracy_curve(sessions, log.truth.labels, windows);
  ASSERT_EQ(curve.size(), windows.size());
  for (std::size_t i = 1; i < curve.size(); ++i) {
    for (Task t : kAllTasks) {
      EXPECT_GE(*curve[i].tasks[index_of(t)].accuracy(), *curve[i - 1].tasks[index_of(t)].accuracy())
          << to_string(t) << " at " << to_ms(windows[i]);
      EXPECT_GE(*curve[i].tasks[index_of(t)].eventual_positive_accuracy(),
                *curve[i - 1].tasks[index_of(t)].eventual_positive_accuracy());
    }
  }
}

}  // namespace
}  // namespace sliver
