#include <cmath>

#include "sliver/errors.hpp"
#include "sliver/training.hpp"

namespace sliver {

AdamOptimizer::AdamOptimizer(const MultiTaskModel& model, AdamConfig config) : config_(config) {
  for (const auto& p : model.dense()) {
    dense_m_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    dense_v_.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  }
  for (const auto& t : model.embeddings()) {
    emb_m_.push_back(EmbeddingTable::Zero(t.rows(), t.cols()));
    emb_v_.push_back(EmbeddingTable::Zero(t.rows(), t.cols()));
  }
}

void AdamOptimizer::step(MultiTaskModel& model, const Gradients& grads) {
  if (grads.dense.size() != dense_m_.size() || grads.embedding.size() != emb_m_.size()) {
    throw ShapeError("gradient layout does not match the optimizer");
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  for (std::size_t i = 0; i < dense_m_.size(); ++i) {
    const auto& g = grads.dense[i];
    dense_m_[i] = b1 * dense_m_[i] + (1.0 - b1) * g;
    dense_v_[i] = b2 * dense_v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    model.dense()[i].array() -=
        lr * (dense_m_[i].array() / c1) / ((dense_v_[i].array() / c2).sqrt() + eps);
  }
  for (std::size_t t = 0; t < emb_m_.size(); ++t) {
    auto& table = model.embeddings()[t];
    for (const auto& [row, g] : grads.embedding[t]) {
      const auto r = static_cast<Eigen::Index>(row);
      auto m = emb_m_[t].row(r);
      auto v = emb_v_[t].row(r);
      m = b1 * m + (1.0 - b1) * g.transpose();
      v = b2 * v + (1.0 - b2) * g.transpose().cwiseProduct(g.transpose());
      table.row(r).array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
  }
}

}  // namespace sliver
