#include <algorithm>
#include <numeric>
#include <cmath>
#include <thread>

#include "sliver/errors.hpp"
#include "sliver/metrics.hpp"

namespace sliver {

namespace {

constexpr std::size_t kPredictChunk = 2048;

SeedRun run_seed(std::span<const EncodedFeatures> features, std::span<const LabeledSample> stream,
                 const std::vector<TestSet>& tests, const EvalConfig& config, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  MultiTaskModel model(FeatureEncoding::standard(config.encoding), config.model, seed);
  StreamingFitter fitter(model, config.train, stream, features);
  const auto& sched = config.schedule;
  for (std::size_t w = 0; w < sched.windows; ++w) {
    const Timestamp a = sched.start + static_cast<std::int64_t>(w) * sched.step;
    const Timestamp b = a + sched.step;
    fitter.advance(a);
    if (auto mu = fitter.last_consumed_mu(); mu && *mu >= a) {
      throw LeakageError("trained on a sample emitted at " + std::to_string(to_ms(*mu)) +
                         " ms before evaluating from " + std::to_string(to_ms(a)) + " ms");
    }
    run.windows.push_back(evaluate_window(model, tests[w], features, a, b));
  }
  run.trained_samples = fitter.consumed();
  run.max_trained_mu = fitter.last_consumed_mu();
  run.trace = fitter.trace();
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& win : run.windows) {
      if (win.auc[t]) {
        sum += *win.auc[t];
        ++n;
      }
    }
    if (n) run.mean_auc[t] = sum / static_cast<double>(n);
  }
  return run;
}

}  // namespace

TestSet build_test_set(std::span<const ImpressionSession> sessions, Timestamp start, Timestamp end) {
  TestSet test;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    if (!s.impressed() || s.censored || s.request_ts < start || s.request_ts >= end) continue;
    std::array<TaskLabel, kNumTasks> labels{};
    for (Task task : kAllTasks) {
      TaskLabel label = s.behavior(task) ? TaskLabel::kPositive : TaskLabel::kNegative;
      if (in_post_click_space(task) && !s.behavior(Task::kClick)) label = TaskLabel::kAbsent;
      labels[index_of(task)] = label;
    }
    test.sessions.push_back(i);
    test.labels.push_back(labels);
  }
  return test;
}

EvalWindowResult evaluate_window(const MultiTaskModel& model, const TestSet& test,
                                 std::span<const EncodedFeatures> features, Timestamp start, Timestamp end) {
  EvalWindowResult out;
  out.start = start;
  out.end = end;
  std::array<std::vector<double>, kNumTasks> scores;
  std::array<std::vector<std::uint8_t>, kNumTasks> labels;
  for (std::size_t begin = 0; begin < test.sessions.size(); begin += kPredictChunk) {
    const std::size_t stop = std::min(test.sessions.size(), begin + kPredictChunk);
    std::vector<const EncodedFeatures*> batch;
    for (std::size_t i = begin; i < stop; ++i) batch.push_back(&features[test.sessions[i]]);
    const Predictions p = model.predict(batch);
    for (std::size_t i = begin; i < stop; ++i) {
      for (std::size_t t = 0; t < kNumTasks; ++t) {
        const TaskLabel label = test.labels[i][t];
        if (label == TaskLabel::kAbsent) continue;
        scores[t].push_back(p(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i - begin)));
        labels[t].push_back(label == TaskLabel::kPositive ? 1 : 0);
        (label == TaskLabel::kPositive ? out.positives[t] : out.negatives[t]) += 1;
      }
    }
  }
  for (std::size_t t = 0; t < kNumTasks; ++t) out.auc[t] = auc(scores[t], labels[t]);
  return out;
}

ParadigmEval streaming_eval(std::span<const ImpressionSession> sessions, std::span<const EncodedFeatures> features,
                            std::span<const LabeledSample> stream, const std::string& paradigm,
                            const EvalConfig& config) {
  if (features.size() != sessions.size()) throw ShapeError("one feature encoding per session is required");
  if (config.seeds.empty()) throw ConfigError("evaluation needs at least one seed");
  if (config.schedule.windows == 0 || config.schedule.step <= Duration::zero()) {
    throw ConfigError("evaluation schedule needs positive windows and step");
  }
  std::vector<TestSet> tests;
  for (std::size_t w = 0; w < config.schedule.windows; ++w) {
    const Timestamp a = config.schedule.start + static_cast<std::int64_t>(w) * config.schedule.step;
    tests.push_back(build_test_set(sessions, a, a + config.schedule.step));
  }

  ParadigmEval out;
  out.paradigm = paradigm;
  out.architecture = config.model.architecture;
  out.runs.resize(config.seeds.size());
  const std::size_t threads = std::clamp<std::size_t>(config.threads, 1, config.seeds.size());
  if (threads == 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      out.runs[i] = run_seed(features, stream, tests, config, config.seeds[i]);
    }
  } else {
    std::vector<std::exception_ptr> errors(config.seeds.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t p = 0; p < threads; ++p) {
        pool.emplace_back([&, p] {
          for (std::size_t i = p; i < config.seeds.size(); i += threads) {
            try {
              out.runs[i] = run_seed(features, stream, tests, config, config.seeds[i]);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t t = 0; t < kNumTasks; ++t) {
    std::vector<double> means;
    for (const auto& run : out.runs) {
      if (run.mean_auc[t]) means.push_back(*run.mean_auc[t]);
      for (const auto& win : run.windows) {
        if (!win.auc[t]) ++out.undefined_windows[t];
      }
    }
    if (means.empty()) continue;
    const double n = static_cast<double>(means.size());
    const double mean = std::accumulate(means.begin(), means.end(), 0.0) / n;
    out.mean_auc[t] = mean;
    if (means.size() > 1) {
      double ss = 0.0;
      for (double m : means) ss += (m - mean) * (m - mean);
      out.std_error[t] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    } else {
      out.std_error[t] = 0.0;
    }
  }
  return out;
}

std::optional<double> EvalReport::rela_impr_of(const ParadigmEval& cell, Task task) const {
  const std::size_t t = index_of(task);
  for (const auto& base : cells) {
    if (base.paradigm != baseline || base.architecture != cell.architecture) continue;
    if (!base.mean_auc[t] || !cell.mean_auc[t] || !(*base.mean_auc[t] > 0.5)) return std::nullopt;
    return rela_impr(*cell.mean_auc[t], *base.mean_auc[t]);
  }
  return std::nullopt;
}

}  // namespace sliver
