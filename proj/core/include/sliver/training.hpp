#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sliver/model.hpp"

namespace sliver {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with moment buffers shaped like the model. Embedding rows are updated
/// only when a batch touches them; bias correction uses the global step.
class AdamOptimizer {
 public:
  AdamOptimizer(const MultiTaskModel& model, AdamConfig config);

  void step(MultiTaskModel& model, const Gradients& grads);
  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

  const std::vector<Eigen::MatrixXd>& dense_first_moment() const { return dense_m_; }
  const std::vector<Eigen::MatrixXd>& dense_second_moment() const { return dense_v_; }
  const std::vector<EmbeddingTable>& embedding_first_moment() const { return emb_m_; }
  const std::vector<EmbeddingTable>& embedding_second_moment() const { return emb_v_; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<Eigen::MatrixXd> dense_m_, dense_v_;
  std::vector<EmbeddingTable> emb_m_, emb_v_;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  AdamConfig adam;
  TaskWeights loss_weights{1.0, 1.0, 1.0};
};

/// Throws NonFiniteError naming the first non-finite parameter gradient.
LossValue train_step(MultiTaskModel& model, AdamOptimizer& optimizer, std::span<const Example> batch,
                     const TaskWeights& weights);

struct TraceRow {
  std::int64_t step = 0;
  /// μ of the newest sample in the batch.
  Timestamp frontier{};
  std::size_t batch_size = 0;
  LossValue loss;
};

/// Consumes a μ-sorted stream in consecutive batches. `features` holds one
/// encoding per session, indexed by LabeledSample::session.
class StreamingFitter {
 public:
  /// Throws OrderError when the stream is not sorted by μ.
  StreamingFitter(MultiTaskModel& model, TrainConfig config, std::span<const LabeledSample> stream,
                  std::span<const EncodedFeatures> features);

  /// Trains on every remaining sample with μ < limit, ending with a partial
  /// batch if needed.
  void advance(Timestamp limit);
  void finish() { advance(kEndOfTime); }

  std::size_t consumed() const { return next_; }
  std::optional<Timestamp> last_consumed_mu() const;
  const std::vector<TraceRow>& trace() const { return trace_; }
  const AdamOptimizer& optimizer() const { return optimizer_; }

 private:
  void train_range(std::size_t begin, std::size_t end);

  MultiTaskModel& model_;
  TrainConfig config_;
  AdamOptimizer optimizer_;
  std::span<const LabeledSample> stream_;
  std::span<const EncodedFeatures> features_;
  std::size_t next_ = 0;
  std::vector<TraceRow> trace_;
};

/// Trains over the whole stream and returns the trace.
std::vector<TraceRow> streaming_fit(MultiTaskModel& model, std::span<const LabeledSample> stream,
                                    std::span<const EncodedFeatures> features, const TrainConfig& config);

void write_trace(const std::filesystem::path& path, std::span<const TraceRow> trace);

/// Versioned binary checkpoint: magic, JSON header with shapes, raw doubles.
void save_checkpoint(const std::filesystem::path& path, const MultiTaskModel& model);
MultiTaskModel load_checkpoint(const std::filesystem::path& path);

}  // namespace sliver
