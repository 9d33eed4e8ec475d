#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "sliver/errors.hpp"
#include "sliver/windowing.hpp"

namespace sliver {

namespace {

using ordered_json = nlohmann::ordered_json;

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void count(TaskAccuracy& acc, TaskLabel label, bool eventual) {
  if (label == TaskLabel::kAbsent) return;
  const bool positive = label == TaskLabel::kPositive;
  ++acc.labeled;
  if (positive == eventual) ++acc.correct;
  if (positive) {
    ++acc.positives;
    if (eventual) ++acc.true_positives;
  } else {
    ++acc.negatives;
    if (!eventual) ++acc.true_negatives;
  }
  if (eventual) {
    ++acc.eventual_positive;
    if (positive) ++acc.eventual_positive_hit;
  }
}

ordered_json to_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json to_json(const std::array<TaskAccuracy, kNumTasks>& tasks) {
  ordered_json out = ordered_json::object();
  for (Task task : kAllTasks) {
    const auto& a = tasks[index_of(task)];
    out[std::string(to_string(task))] = {
        {"labeled", a.labeled},
        {"accuracy", to_json(a.accuracy())},
        {"eventual_positive_accuracy", to_json(a.eventual_positive_accuracy())},
        {"positive_precision", to_json(a.positive_precision())},
        {"negative_precision", to_json(a.negative_precision())},
        {"positives", a.positives},
        {"negatives", a.negatives},
    };
  }
  return out;
}

}  // namespace

std::optional<double> TaskAccuracy::accuracy() const { return ratio(correct, labeled); }
std::optional<double> TaskAccuracy::positive_precision() const { return ratio(true_positives, positives); }
std::optional<double> TaskAccuracy::negative_precision() const { return ratio(true_negatives, negatives); }
std::optional<double> TaskAccuracy::eventual_positive_accuracy() const {
  return ratio(eventual_positive_hit, eventual_positive);
}

TaskAccuracy& TaskAccuracy::operator+=(const TaskAccuracy& o) {
  labeled += o.labeled;
  correct += o.correct;
  positives += o.positives;
  true_positives += o.true_positives;
  negatives += o.negatives;
  true_negatives += o.true_negatives;
  eventual_positive += o.eventual_positive;
  eventual_positive_hit += o.eventual_positive_hit;
  return *this;
}

std::vector<Duration> default_accuracy_buckets() {
  using namespace std::chrono;
  return {Duration::zero(), seconds(30), minutes(1), minutes(2), minutes(5), minutes(10), minutes(30), hours(1)};
}

LabelAccuracyReport audit_label_accuracy(std::span<const LabeledSample> samples,
                                         std::span<const ImpressionSession> sessions, const EventualLabelTable& truth,
                                         std::span<const Duration> edges) {
  if (edges.empty() || edges.front() != Duration::zero()) throw DomainError("accuracy buckets must start at 0");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw DomainError("accuracy bucket edges must increase strictly");
  }
  LabelAccuracyReport report;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    AccuracyBucket bucket;
    bucket.lo = edges[i];
    if (i + 1 < edges.size()) bucket.hi = edges[i + 1];
    report.buckets.push_back(bucket);
  }

  for (const auto& sample : samples) {
    if (sample.session >= sessions.size()) throw LookupError("sample references an unknown session");
    const auto& s = sessions[sample.session];
    auto it = s.censored ? truth.end() : truth.find(s.key());
    if (it == truth.end() || !s.impression_ts) {
      ++report.excluded;
      continue;
    }
    const Duration delay = std::max(Duration::zero(), sample.emit_ts - *s.impression_ts);
    auto bucket = std::upper_bound(edges.begin(), edges.end(), delay) - edges.begin() - 1;
    for (Task task : kAllTasks) {
      const std::size_t t = index_of(task);
      count(report.overall[t], sample.labels[t], it->second.positive[t]);
      count(report.buckets[static_cast<std::size_t>(bucket)].tasks[t], sample.labels[t], it->second.positive[t]);
    }
  }
  return report;
}

std::vector<AccuracyPoint> accuracy_curve(std::span<const ImpressionSession> sessions, const EventualLabelTable& truth,
                                          std::span<const Duration> windows) {
  std::vector<AccuracyPoint> curve;
  const Duration edges[] = {Duration::zero()};
  for (Duration w : windows) {
    std::vector<LabeledSample> samples;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      for (auto& sample : label_fixed_from_impression(sessions[i], w, i)) samples.push_back(sample);
    }
    curve.push_back({w, audit_label_accuracy(samples, sessions, truth, edges).overall});
  }
  return curve;
}

void write_accuracy_report(const std::filesystem::path& path, const LabelAccuracyReport& report,
                           std::span<const AccuracyPoint> curve) {
  ordered_json doc;
  doc["excluded_samples"] = report.excluded;
  doc["overall"] = to_json(report.overall);
  ordered_json buckets = ordered_json::array();
  for (const auto& b : report.buckets) {
    buckets.push_back({{"delay_lo_ms", to_ms(b.lo)},
                       {"delay_hi_ms", b.hi ? ordered_json(to_ms(*b.hi)) : ordered_json(nullptr)},
                       {"tasks", to_json(b.tasks)}});
  }
  doc["buckets"] = std::move(buckets);
  ordered_json points = ordered_json::array();
  for (const auto& p : curve) points.push_back({{"window_ms", to_ms(p.window)}, {"tasks", to_json(p.tasks)}});
  doc["impression_window_curve"] = std::move(points);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write accuracy report " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace sliver
