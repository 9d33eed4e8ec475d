#include <algorithm>
#include <cmath>
#include <numeric>

#include "sliver/errors.hpp"
#include "sliver/metrics.hpp"

namespace sliver {

std::optional<double> auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // 2U accumulated in integers: each positive scores 2 per lower negative and 1 per tied negative.
  std::uint64_t twice_u = 0;
  std::uint64_t negatives_below = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos = 0;
    std::uint64_t neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos : neg) += 1;
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double rela_impr(double auc_measured, double auc_base) {
  if (!(auc_base > 0.5)) throw DomainError("RelaImpr needs a baseline AUC above 0.5");
  return ((auc_measured - 0.5) / (auc_base - 0.5) - 1.0) * 100.0;
}

Quantiles summarize(std::vector<double> values) {
  Quantiles q;
  q.count = values.size();
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  auto rank = [&](double p) {
    const auto r = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
    return values[std::clamp<std::size_t>(r, 1, values.size()) - 1];
  };
  q.p50 = rank(0.5);
  q.p90 = rank(0.9);
  q.max = values.back();
  return q;
}

DelayStats delay_stats(std::span<const LabeledSample> samples, std::span<const ImpressionSession> sessions,
                       std::string paradigm) {
  DelayStats out;
  out.paradigm = std::move(paradigm);
  std::array<std::vector<double>, kNumTasks> positive;
  std::vector<double> after_impression;
  std::vector<double> after_request;
  for (const auto& sample : samples) {
    const auto& s = sessions[sample.session];
    after_request.push_back(static_cast<double>(to_ms(sample.emit_ts - s.request_ts)));
    if (s.impression_ts) after_impression.push_back(static_cast<double>(to_ms(sample.emit_ts - *s.impression_ts)));
    for (Task task : kAllTasks) {
      if (sample.label(task) == TaskLabel::kPositive && s.behavior(task)) {
        positive[index_of(task)].push_back(static_cast<double>(to_ms(sample.emit_ts - *s.behavior(task))));
      }
    }
  }
  for (std::size_t t = 0; t < kNumTasks; ++t) out.positive_delay[t] = summarize(std::move(positive[t]));
  out.emit_after_impression = summarize(std::move(after_impression));
  out.emit_after_request = summarize(std::move(after_request));
  return out;
}

}  // namespace sliver
