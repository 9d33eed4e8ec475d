#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sliver/features.hpp"
#include "sliver/windowing.hpp"

namespace sliver {

enum class Architecture : std::uint8_t { kSharedBottom, kMMoE };

std::string_view to_string(Architecture arch);  // "shared-bottom", "mmoe"
/// Throws ConfigError.
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
  Architecture architecture = Architecture::kSharedBottom;
  std::vector<std::size_t> bottom_hidden{64, 32};
  std::size_t num_experts = 3;
  std::vector<std::size_t> expert_hidden{64, 32};
  std::vector<std::size_t> tower_hidden{32, 32, 16};
  /// Embeddings start U(-scale, scale).
  double embedding_init_scale = 0.05;
};

using TaskWeights = std::array<double, kNumTasks>;

struct LossWeights {
  TaskWeights train{1.0, 1.0, 1.0};   // w^b
  TaskWeights fusion{1.0, 1.0, 1.0};  // α^b
};

/// s = Σ_b α^b ŷ^b.
double fusion_score(const std::array<double, kNumTasks>& preds, const TaskWeights& alpha);

using EmbeddingTable = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// One column per example, one row per task.
using Predictions = Eigen::Matrix<double, static_cast<int>(kNumTasks), Eigen::Dynamic>;

struct Example {
  const EncodedFeatures* features = nullptr;
  std::array<TaskLabel, kNumTasks> labels{};
};

/// Dense gradients mirror the dense parameter list; embedding gradients hold
/// only the rows a batch touched.
struct Gradients {
  std::vector<Eigen::MatrixXd> dense;
  std::vector<std::map<std::uint32_t, Eigen::VectorXd>> embedding;
};

struct LossValue {
  double total = 0.0;
  std::array<double, kNumTasks> per_task{};
  std::array<std::size_t, kNumTasks> counts{};
};

inline constexpr double kProbabilityClip = 1e-7;

class MultiTaskModel {
 public:
  MultiTaskModel(FeatureEncoding encoding, ModelConfig config, std::uint64_t seed);

  const FeatureEncoding& encoding() const { return encoding_; }
  const ModelConfig& config() const { return config_; }
  std::size_t input_width() const { return encoding_.input_width(); }

  /// Builds the input matrix (input_width x n) from table lookups.
  Eigen::MatrixXd assemble_inputs(std::span<const EncodedFeatures* const> batch) const;

  /// ŷ for pre-assembled inputs; throws ShapeError on a row-count mismatch.
  Predictions forward(const Eigen::MatrixXd& inputs) const;
  Predictions predict(std::span<const EncodedFeatures* const> batch) const;
  std::array<double, kNumTasks> predict(const EncodedFeatures& features) const;

  /// Per-task softmax gate values (experts x n); empty for Shared Bottom.
  std::vector<Eigen::MatrixXd> gates(const Eigen::MatrixXd& inputs) const;

  LossValue loss(std::span<const Example> batch, const TaskWeights& weights) const;
  LossValue loss_and_gradients(std::span<const Example> batch, const TaskWeights& weights, Gradients& grads) const;

  // Parameter registry. Dense parameters are matrices (biases have one column).
  std::vector<Eigen::MatrixXd>& dense() { return dense_; }
  const std::vector<Eigen::MatrixXd>& dense() const { return dense_; }
  const std::vector<std::string>& dense_names() const { return dense_names_; }
  /// Task owning a dense parameter; nullopt for shared parameters.
  std::optional<Task> dense_owner(std::size_t index) const { return dense_owner_[index]; }
  std::vector<EmbeddingTable>& embeddings() { return embeddings_; }
  const std::vector<EmbeddingTable>& embeddings() const { return embeddings_; }
  std::size_t num_parameters() const;
  std::size_t dense_index(std::string_view name) const;

 private:
  struct Layer {
    std::size_t w = 0;  // index into dense_
    std::size_t b = 0;
  };
  struct Cache;

  std::vector<Layer> add_stack(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& widths,
                               std::optional<Task> owner);
  Layer add_layer(const std::string& prefix, std::size_t in, std::size_t out, std::optional<Task> owner);
  Predictions run(const Eigen::MatrixXd& inputs, Cache* cache) const;

  FeatureEncoding encoding_;
  ModelConfig config_;
  std::vector<Eigen::MatrixXd> dense_;
  std::vector<std::string> dense_names_;
  std::vector<std::optional<Task>> dense_owner_;
  std::vector<EmbeddingTable> embeddings_;

  std::vector<Layer> bottom_;                // Shared Bottom
  std::vector<std::vector<Layer>> experts_;  // MMoE
  std::vector<Layer> gates_;                 // MMoE, one per task
  std::vector<std::vector<Layer>> towers_;   // per task; last layer is the logit
};

}  // namespace sliver
