#pragma once

// Brute-force references used by the unit and acceptance tests. Everything
// here is deliberately naive: per-window scans, nested loops, no shared code
// with the library beyond its data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "sliver/events.hpp"
#include "sliver/model.hpp"
#include "sliver/windowing.hpp"

namespace sliver::testing {

// A labeled sample reduced to what the label logic decides.
struct OracleSample {
  std::int64_t mu_ms = 0;
  std::optional<std::int64_t> window_id;
  std::array<TaskLabel, kNumTasks> labels{};

  auto operator<=>(const OracleSample&) const = default;
};

inline OracleSample reduce(const LabeledSample& s) { return {to_ms(s.emit_ts), s.window_id, s.labels}; }

inline std::vector<OracleSample> reduce_sorted(const std::vector<LabeledSample>& samples) {
  std::vector<OracleSample> out;
  for (const auto& s : samples) out.push_back(reduce(s));
  std::sort(out.begin(), out.end());
  return out;
}

inline bool any_label(const std::array<TaskLabel, kNumTasks>& labels) {
  for (auto l : labels) {
    if (l != TaskLabel::kAbsent) return true;
  }
  return false;
}

inline std::optional<std::int64_t> ms_of(const std::optional<Timestamp>& ts) {
  if (!ts) return std::nullopt;
  return to_ms(*ts);
}

// Fixed window (lo, hi) with strict inequalities on both ends. Click and
// follow: positive inside, negative otherwise. Like: labeled only when the
// click is inside.
inline std::array<TaskLabel, kNumTasks> fixed_labels(const ImpressionSession& s, std::int64_t lo, std::int64_t hi) {
  auto inside = [&](std::optional<std::int64_t> t) { return t && lo < *t && *t < hi; };
  std::array<TaskLabel, kNumTasks> out{};
  const auto click = ms_of(s.behavior(Task::kClick));
  const auto follow = ms_of(s.behavior(Task::kFollow));
  const auto like = ms_of(s.behavior(Task::kLike));
  out[0] = inside(click) ? TaskLabel::kPositive : TaskLabel::kNegative;
  out[1] = inside(follow) ? TaskLabel::kPositive : TaskLabel::kNegative;
  if (inside(click)) {
    out[2] = inside(like) ? TaskLabel::kPositive : TaskLabel::kNegative;
  } else {
    out[2] = TaskLabel::kAbsent;
  }
  return out;
}

inline std::vector<OracleSample> oracle_fixed_from_request(const ImpressionSession& s, std::int64_t w) {
  if (!s.impression_ts) return {};
  const std::int64_t t = to_ms(s.request_ts);
  const std::int64_t tau = to_ms(*s.impression_ts) - t;
  if (!(tau < w)) return {};
  auto labels = fixed_labels(s, t, t + w);
  if (!any_label(labels)) return {};
  return {{t + w, std::nullopt, labels}};
}

inline std::vector<OracleSample> oracle_fixed_from_impression(const ImpressionSession& s, std::int64_t w) {
  if (!s.impression_ts) return {};
  const std::int64_t imp = to_ms(*s.impression_ts);
  auto labels = fixed_labels(s, imp, imp + w);
  if (!any_label(labels)) return {};
  return {{imp + w, std::nullopt, labels}};
}

// Walks every grid window from the impression to the last observed event and
// applies the per-window cases.
inline std::vector<OracleSample> oracle_sliver(const ImpressionSession& s, std::int64_t w, std::int64_t t_uni) {
  if (!s.impression_ts) return {};
  const auto click = ms_of(s.behavior(Task::kClick));
  std::array<std::optional<std::int64_t>, kNumTasks> b = {click, ms_of(s.behavior(Task::kFollow)),
                                                          ms_of(s.behavior(Task::kLike))};
  std::optional<std::int64_t> exit;
  if (!s.censored) exit = ms_of(s.exit_ts);

  std::int64_t last = to_ms(*s.impression_ts);
  for (const auto& t : b) {
    if (t) last = std::max(last, *t);
  }
  if (exit) last = std::max(last, *exit);

  std::vector<OracleSample> out;
  for (std::int64_t k = 1;; ++k) {
    const std::int64_t start = t_uni + (k - 1) * w;
    const std::int64_t end = t_uni + k * w;
    if (start > last) break;
    if (end <= to_ms(*s.impression_ts)) continue;
    const bool exit_here = exit && start <= *exit && *exit < end;
    std::array<TaskLabel, kNumTasks> labels{};
    for (std::size_t task = 0; task < kNumTasks; ++task) {
      if (b[task] && start <= *b[task] && *b[task] < end) {
        labels[task] = TaskLabel::kPositive;
      } else if (!b[task] && exit_here) {
        if (task != 2 || (click && *click < end)) labels[task] = TaskLabel::kNegative;
      }
    }
    if (any_label(labels)) out.push_back({end, k, labels});
  }
  return out;
}

struct RandomSessionOptions {
  // Timestamps are drawn on a coarse grid so that boundary ties are common.
  std::int64_t grain_ms = 5'000;
  std::int64_t span_grains = 60;
  double impression_rate = 0.9;
  double censor_rate = 0.15;
};

// A valid random session: impression >= request, behaviors inside
// [impression, exit], like after click.
inline ImpressionSession random_session(std::mt19937_64& rng, std::size_t id, const RandomSessionOptions& o = {}) {
  std::uniform_int_distribution<std::int64_t> grains(0, o.span_grains);
  std::uniform_int_distribution<std::int64_t> jitter(0, 2);
  std::bernoulli_distribution coin(0.5);
  auto draw = [&]() { return grains(rng) * o.grain_ms + (coin(rng) ? 0 : jitter(rng)); };

  ImpressionSession s;
  s.user.user_id = "u" + std::to_string(id);
  s.live.live_id = "l" + std::to_string(id % 7);
  s.request_ts = from_ms(draw());
  s.live.snapshot_ts = s.request_ts;
  if (!std::bernoulli_distribution(o.impression_rate)(rng)) return s;

  const std::int64_t imp = to_ms(s.request_ts) + draw() / 2;
  s.impression_ts = from_ms(imp);
  const std::int64_t exit = imp + draw();
  std::uniform_int_distribution<std::int64_t> within(imp, exit);
  std::optional<std::int64_t> click;
  if (coin(rng)) {
    click = within(rng);
    s.behavior_ts[0] = from_ms(*click);
  }
  if (coin(rng)) s.behavior_ts[1] = from_ms(within(rng));
  if (click && coin(rng)) s.behavior_ts[2] = from_ms(std::uniform_int_distribution<std::int64_t>(*click, exit)(rng));
  s.exit_ts = from_ms(exit);
  s.censored = std::bernoulli_distribution(o.censor_rate)(rng);
  return s;
}

// Mann-Whitney by comparing every positive with every negative. Returns
// (2 * wins + ties, 2 * n1 * n0) so the caller can compare exactly.
inline std::pair<std::int64_t, std::int64_t> pairwise_auc_counts(const std::vector<double>& scores,
                                                                 const std::vector<std::uint8_t>& labels) {
  std::int64_t num = 0;
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      ++pos;
    } else {
      ++neg;
    }
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) num += 2;
      if (scores[i] == scores[j]) num += 1;
    }
  }
  return {num, 2 * pos * neg};
}

// Scalar forward pass driven by parameter names only. When `min_abs_pre` is
// given it is lowered to the smallest |pre-activation| seen at any ReLU.
inline std::array<double, kNumTasks> reference_forward(const MultiTaskModel& model, const std::vector<double>& x,
                                                       double* min_abs_pre = nullptr) {
  auto layer = [&](const std::string& prefix, const std::vector<double>& in, bool relu) {
    const auto& w = model.dense()[model.dense_index(prefix + ".w")];
    const auto& b = model.dense()[model.dense_index(prefix + ".b")];
    std::vector<double> out(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double acc = b(r, 0);
      for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * in[static_cast<std::size_t>(c)];
      if (relu && min_abs_pre) *min_abs_pre = std::min(*min_abs_pre, std::abs(acc));
      out[static_cast<std::size_t>(r)] = relu ? std::max(0.0, acc) : acc;
    }
    return out;
  };
  auto stack = [&](const std::string& prefix, std::vector<double> h, std::size_t depth) {
    for (std::size_t i = 0; i < depth; ++i) h = layer(prefix + "." + std::to_string(i), h, true);
    return h;
  };

  const auto& cfg = model.config();
  std::array<double, kNumTasks> out{};
  std::vector<std::vector<double>> experts;
  std::vector<double> shared;
  if (cfg.architecture == Architecture::kSharedBottom) {
    shared = stack("bottom", x, cfg.bottom_hidden.size());
  } else {
    for (std::size_t e = 0; e < cfg.num_experts; ++e) {
      experts.push_back(stack("expert." + std::to_string(e), x, cfg.expert_hidden.size()));
    }
  }
  for (Task task : kAllTasks) {
    const std::string name(to_string(task));
    std::vector<double> h = shared;
    if (cfg.architecture == Architecture::kMMoE) {
      auto logits = layer("gate." + name, x, false);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& v : logits) z += (v = std::exp(v - mx));
      h.assign(experts.front().size(), 0.0);
      for (std::size_t e = 0; e < experts.size(); ++e) {
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += logits[e] / z * experts[e][i];
      }
    }
    h = stack("tower." + name, h, cfg.tower_hidden.size());
    const double logit = layer("tower." + name + ".out", h, false)[0];
    out[index_of(task)] = 1.0 / (1.0 + std::exp(-logit));
  }
  return out;
}

// Fresh directory under the build tree's temp area; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sliver-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sliver::testing
