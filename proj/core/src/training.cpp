#include <cmath>
#include <fstream>

#include "sliver/errors.hpp"
#include "sliver/training.hpp"

namespace sliver {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

LossValue train_step(MultiTaskModel& model, AdamOptimizer& optimizer, std::span<const Example> batch,
                     const TaskWeights& weights) {
  Gradients grads;
  const LossValue loss = model.loss_and_gradients(batch, weights, grads);
  if (!std::isfinite(loss.total)) {
    throw NonFiniteError("non-finite loss at step " + std::to_string(optimizer.steps() + 1));
  }
  for (std::size_t i = 0; i < grads.dense.size(); ++i) {
    if (!all_finite(grads.dense[i])) {
      throw NonFiniteError("non-finite gradient for " + model.dense_names()[i] + " at step " +
                           std::to_string(optimizer.steps() + 1));
    }
  }
  for (std::size_t t = 0; t < grads.embedding.size(); ++t) {
    for (const auto& [row, g] : grads.embedding[t]) {
      if (!g.allFinite()) {
        throw NonFiniteError("non-finite gradient for embedding " + model.encoding().tables()[t].name + " row " +
                             std::to_string(row) + " at step " + std::to_string(optimizer.steps() + 1));
      }
    }
  }
  optimizer.step(model, grads);
  return loss;
}

StreamingFitter::StreamingFitter(MultiTaskModel& model, TrainConfig config, std::span<const LabeledSample> stream,
                                 std::span<const EncodedFeatures> features)
    : model_(model), config_(config), optimizer_(model, config.adam), stream_(stream), features_(features) {
  if (config_.batch_size == 0) throw ConfigError("batch size must be positive");
  for (std::size_t i = 0; i < stream_.size(); ++i) {
    if (i > 0 && stream_[i].emit_ts < stream_[i - 1].emit_ts) {
      throw OrderError("training stream is not sorted by emit time at sample " + std::to_string(i));
    }
    if (stream_[i].session >= features_.size()) throw LookupError("sample references an unencoded session");
  }
}

std::optional<Timestamp> StreamingFitter::last_consumed_mu() const {
  if (next_ == 0) return std::nullopt;
  return stream_[next_ - 1].emit_ts;
}

void StreamingFitter::advance(Timestamp limit) {
  std::size_t end = next_;
  while (end < stream_.size() && stream_[end].emit_ts < limit) ++end;
  while (next_ < end) {
    const std::size_t stop = std::min(end, next_ + config_.batch_size);
    train_range(next_, stop);
    next_ = stop;
  }
}

void StreamingFitter::train_range(std::size_t begin, std::size_t end) {
  std::vector<Example> batch;
  batch.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) batch.push_back({&features_[stream_[i].session], stream_[i].labels});
  TraceRow row;
  row.loss = train_step(model_, optimizer_, batch, config_.loss_weights);
  row.step = optimizer_.steps();
  row.frontier = stream_[end - 1].emit_ts;
  row.batch_size = end - begin;
  trace_.push_back(row);
}

std::vector<TraceRow> streaming_fit(MultiTaskModel& model, std::span<const LabeledSample> stream,
                                    std::span<const EncodedFeatures> features, const TrainConfig& config) {
  StreamingFitter fitter(model, config, stream, features);
  fitter.finish();
  return fitter.trace();
}

void write_trace(const std::filesystem::path& path, std::span<const TraceRow> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace " + path.string());
  out.precision(17);
  out << "step,frontier_mu_ms,batch_size,loss,loss_click,loss_follow,loss_like\n";
  for (const auto& r : trace) {
    out << r.step << ',' << to_ms(r.frontier) << ',' << r.batch_size << ',' << r.loss.total;
    for (double l : r.loss.per_task) out << ',' << l;
    out << '\n';
  }
}

}  // namespace sliver
