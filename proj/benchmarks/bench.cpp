#include <random>

#include <benchmark/benchmark.h>

#include "sliver/metrics.hpp"
#include "sliver/simgen.hpp"
#include "sliver/training.hpp"
#include "sliver/windowing.hpp"

namespace {

using namespace sliver;

const GeneratedLog& small_log() {
  static const GeneratedLog log = [] {
    GeneratorConfig c;
    c.num_users = 4000;
    c.horizon = std::chrono::hours(4);
    return generate(c);
  }();
  return log;
}

const std::vector<ImpressionSession>& small_sessions() {
  static const auto sessions = sessionize(small_log().events, kStreamEpoch + std::chrono::hours(4));
  return sessions;
}

void BM_Sessionize(benchmark::State& state) {
  const auto& log = small_log();
  for (auto _ : state) {
    benchmark::DoNotOptimize(sessionize(log.events, kStreamEpoch + std::chrono::hours(4)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(log.events.size()));
}
BENCHMARK(BM_Sessionize)->Unit(benchmark::kMillisecond);

void BM_ProduceStream(benchmark::State& state) {
  const auto& sessions = small_sessions();
  const WindowPolicy policies[] = {FixedFromRequest{}, FixedFromImpression{}, Sliding{}};
  const auto& policy = policies[state.range(0)];
  state.SetLabel(std::string(paradigm_name(policy)));
  for (auto _ : state) benchmark::DoNotOptimize(produce_stream(sessions, policy));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sessions.size()));
}
BENCHMARK(BM_ProduceStream)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = std::uniform_real_distribution<double>()(rng);
    labels[i] = std::bernoulli_distribution(0.1)(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Range(1 << 10, 1 << 18);

void BM_TrainStep(benchmark::State& state) {
  const auto arch = static_cast<Architecture>(state.range(0));
  const auto batch_size = static_cast<std::size_t>(state.range(1));
  const auto enc = FeatureEncoding::standard();
  const auto& sessions = small_sessions();
  std::vector<EncodedFeatures> features;
  for (std::size_t i = 0; i < batch_size; ++i) features.push_back(encode(sessions[i % sessions.size()], enc));
  std::vector<Example> batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    batch.push_back({&features[i], {i % 3 ? TaskLabel::kNegative : TaskLabel::kPositive, TaskLabel::kNegative,
                                    TaskLabel::kAbsent}});
  }
  MultiTaskModel model(enc, ModelConfig{arch}, 1);
  AdamOptimizer opt(model, AdamConfig{});
  state.SetLabel(std::string(to_string(arch)));
  for (auto _ : state) benchmark::DoNotOptimize(train_step(model, opt, batch, {1.0, 1.0, 1.0}));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_TrainStep)->ArgsProduct({{0, 1}, {16, 512}});

}  // namespace

BENCHMARK_MAIN();
