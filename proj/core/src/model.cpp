#include <algorithm>
#include <cmath>
#include <random>

#include "sliver/errors.hpp"
#include "sliver/model.hpp"

namespace sliver {

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& a) { return a.cwiseMax(0.0); }

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    const Eigen::VectorXd e = (a.col(j).array() - a.col(j).maxCoeff()).exp();
    out.col(j) = e / e.sum();
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string_view to_string(Architecture arch) {
  return arch == Architecture::kMMoE ? "mmoe" : "shared-bottom";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "shared-bottom" || name == "sb") return Architecture::kSharedBottom;
  if (name == "mmoe") return Architecture::kMMoE;
  throw ConfigError("unknown model '" + std::string(name) + "' (expected shared-bottom or mmoe)");
}

double fusion_score(const std::array<double, kNumTasks>& preds, const TaskWeights& alpha) {
  double s = 0.0;
  for (std::size_t t = 0; t < kNumTasks; ++t) s += alpha[t] * preds[t];
  return s;
}

struct MultiTaskModel::Cache {
  Eigen::MatrixXd x;
  std::vector<Eigen::MatrixXd> bottom_pre, bottom_act;
  std::vector<std::vector<Eigen::MatrixXd>> expert_pre, expert_act;
  std::vector<Eigen::MatrixXd> gate;
  std::vector<Eigen::MatrixXd> tower_in;
  std::vector<std::vector<Eigen::MatrixXd>> tower_pre, tower_act;
};

MultiTaskModel::MultiTaskModel(FeatureEncoding encoding, ModelConfig config, std::uint64_t seed)
    : encoding_(std::move(encoding)), config_(std::move(config)) {
  const std::size_t in = encoding_.input_width();
  if (in == 0) throw ConfigError("feature encoding has no fields");
  std::size_t shared_out = 0;
  if (config_.architecture == Architecture::kSharedBottom) {
    if (config_.bottom_hidden.empty()) throw ConfigError("shared bottom needs at least one hidden layer");
    bottom_ = add_stack("bottom", in, config_.bottom_hidden, std::nullopt);
    shared_out = config_.bottom_hidden.back();
  } else {
    if (config_.expert_hidden.empty() || config_.num_experts == 0) throw ConfigError("MMoE needs experts");
    for (std::size_t e = 0; e < config_.num_experts; ++e) {
      experts_.push_back(add_stack("expert." + std::to_string(e), in, config_.expert_hidden, std::nullopt));
    }
    for (Task task : kAllTasks) {
      gates_.push_back(add_layer("gate." + std::string(to_string(task)), in, config_.num_experts, task));
    }
    shared_out = config_.expert_hidden.back();
  }
  for (Task task : kAllTasks) {
    const std::string prefix = "tower." + std::string(to_string(task));
    auto tower = add_stack(prefix, shared_out, config_.tower_hidden, task);
    const std::size_t last = config_.tower_hidden.empty() ? shared_out : config_.tower_hidden.back();
    tower.push_back(add_layer(prefix + ".out", last, 1, task));
    towers_.push_back(std::move(tower));
  }

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    auto& m = dense_[i];
    if (m.cols() == 1 && dense_names_[i].ends_with(".b")) {
      m.setZero();
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  }
  std::uniform_real_distribution<double> u(-config_.embedding_init_scale, config_.embedding_init_scale);
  for (const auto& spec : encoding_.tables()) {
    EmbeddingTable table(spec.rows, spec.width);
    for (Eigen::Index r = 0; r < table.rows(); ++r)
      for (Eigen::Index c = 0; c < table.cols(); ++c) table(r, c) = u(rng);
    embeddings_.push_back(std::move(table));
  }
}

MultiTaskModel::Layer MultiTaskModel::add_layer(const std::string& prefix, std::size_t in, std::size_t out,
                                                std::optional<Task> owner) {
  Layer layer{dense_.size(), dense_.size() + 1};
  dense_.emplace_back(out, in);
  dense_names_.push_back(prefix + ".w");
  dense_owner_.push_back(owner);
  dense_.emplace_back(out, 1);
  dense_names_.push_back(prefix + ".b");
  dense_owner_.push_back(owner);
  return layer;
}

std::vector<MultiTaskModel::Layer> MultiTaskModel::add_stack(const std::string& prefix, std::size_t in,
                                                             const std::vector<std::size_t>& widths,
                                                             std::optional<Task> owner) {
  std::vector<Layer> out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    out.push_back(add_layer(prefix + "." + std::to_string(i), in, widths[i], owner));
    in = widths[i];
  }
  return out;
}

std::size_t MultiTaskModel::num_parameters() const {
  std::size_t n = 0;
  for (const auto& m : dense_) n += static_cast<std::size_t>(m.size());
  for (const auto& t : embeddings_) n += static_cast<std::size_t>(t.size());
  return n;
}

std::size_t MultiTaskModel::dense_index(std::string_view name) const {
  auto it = std::find(dense_names_.begin(), dense_names_.end(), name);
  if (it == dense_names_.end()) throw LookupError("no parameter named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - dense_names_.begin());
}

Eigen::MatrixXd MultiTaskModel::assemble_inputs(std::span<const EncodedFeatures* const> batch) const {
  const auto& fields = encoding_.fields();
  const auto offsets = encoding_.field_offsets();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input_width()), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const EncodedFeatures& f = *batch[j];
    if (f.rows.size() != encoding_.num_lookup_fields()) throw ShapeError("encoded features do not match the encoding");
    std::size_t lookup = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto& table = embeddings_[fields[i].table];
      auto slice = x.block(static_cast<Eigen::Index>(offsets[i]), static_cast<Eigen::Index>(j), table.cols(), 1);
      if (fields[i].kind == FieldKind::kHistory) {
        slice.setZero();
        for (auto row : f.history) slice += table.row(row).transpose();
        if (!f.history.empty()) slice /= static_cast<double>(f.history.size());
      } else {
        const auto row = f.rows[lookup++];
        if (row >= table.rows()) throw ShapeError("embedding row out of range for " + fields[i].name);
        slice = table.row(row).transpose();
      }
    }
  }
  return x;
}

Predictions MultiTaskModel::run(const Eigen::MatrixXd& x, Cache* cache) const {
  if (x.rows() != static_cast<Eigen::Index>(input_width())) {
    throw ShapeError("input has " + std::to_string(x.rows()) + " rows, model expects " + std::to_string(input_width()));
  }
  auto linear = [&](const Layer& l, const Eigen::MatrixXd& h) -> Eigen::MatrixXd {
    return (dense_[l.w] * h).colwise() + dense_[l.b].col(0);
  };
  auto stack = [&](const std::vector<Layer>& layers, Eigen::MatrixXd h, std::vector<Eigen::MatrixXd>* pre,
                   std::vector<Eigen::MatrixXd>* act) {
    for (const auto& l : layers) {
      Eigen::MatrixXd a = linear(l, h);
      h = relu(a);
      if (pre) {
        pre->push_back(std::move(a));
        act->push_back(h);
      }
    }
    return h;
  };

  std::vector<Eigen::MatrixXd> tower_in(kNumTasks);
  if (config_.architecture == Architecture::kSharedBottom) {
    const Eigen::MatrixXd shared =
        stack(bottom_, x, cache ? &cache->bottom_pre : nullptr, cache ? &cache->bottom_act : nullptr);
    for (auto& t : tower_in) t = shared;
  } else {
    std::vector<Eigen::MatrixXd> outs;
    if (cache) {
      cache->expert_pre.resize(experts_.size());
      cache->expert_act.resize(experts_.size());
    }
    for (std::size_t e = 0; e < experts_.size(); ++e) {
      outs.push_back(stack(experts_[e], x, cache ? &cache->expert_pre[e] : nullptr,
                           cache ? &cache->expert_act[e] : nullptr));
    }
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      const Eigen::MatrixXd g = softmax_columns(linear(gates_[t], x));
      tower_in[t] = Eigen::MatrixXd::Zero(outs.front().rows(), x.cols());
      for (std::size_t e = 0; e < outs.size(); ++e) {
        tower_in[t] += outs[e] * g.row(static_cast<Eigen::Index>(e)).asDiagonal();
      }
      if (cache) cache->gate.push_back(g);
    }
  }

  Predictions p(kNumTasks, x.cols());
  if (cache) {
    cache->tower_pre.resize(kNumTasks);
    cache->tower_act.resize(kNumTasks);
  }
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const auto& tower = towers_[t];
    const std::vector<Layer> hidden(tower.begin(), tower.end() - 1);
    const Eigen::MatrixXd h =
        stack(hidden, tower_in[t], cache ? &cache->tower_pre[t] : nullptr, cache ? &cache->tower_act[t] : nullptr);
    const Eigen::MatrixXd z = linear(tower.back(), h);
    for (Eigen::Index j = 0; j < x.cols(); ++j) p(static_cast<Eigen::Index>(t), j) = sigmoid(z(0, j));
  }
  if (cache) {
    cache->x = x;
    cache->tower_in = std::move(tower_in);
  }
  return p;
}

Predictions MultiTaskModel::forward(const Eigen::MatrixXd& inputs) const { return run(inputs, nullptr); }

Predictions MultiTaskModel::predict(std::span<const EncodedFeatures* const> batch) const {
  return run(assemble_inputs(batch), nullptr);
}

std::array<double, kNumTasks> MultiTaskModel::predict(const EncodedFeatures& features) const {
  const EncodedFeatures* one[] = {&features};
  const Predictions p = predict(one);
  return {p(0, 0), p(1, 0), p(2, 0)};
}

std::vector<Eigen::MatrixXd> MultiTaskModel::gates(const Eigen::MatrixXd& inputs) const {
  if (config_.architecture != Architecture::kMMoE) return {};
  Cache cache;
  run(inputs, &cache);
  return cache.gate;
}

LossValue MultiTaskModel::loss(std::span<const Example> batch, const TaskWeights& weights) const {
  std::vector<const EncodedFeatures*> feats;
  for (const auto& ex : batch) feats.push_back(ex.features);
  const Predictions p = predict(feats);
  LossValue out;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    double sum = 0.0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const TaskLabel label = batch[j].labels[t];
      if (label == TaskLabel::kAbsent) continue;
      const double q = std::clamp(p(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)), kProbabilityClip,
                                  1.0 - kProbabilityClip);
      sum -= label == TaskLabel::kPositive ? std::log(q) : std::log(1.0 - q);
      ++out.counts[t];
    }
    out.per_task[t] = out.counts[t] ? sum / static_cast<double>(out.counts[t]) : 0.0;
    out.total += weights[t] * out.per_task[t];
  }
  return out;
}

LossValue MultiTaskModel::loss_and_gradients(std::span<const Example> batch, const TaskWeights& weights,
                                             Gradients& grads) const {
  if (batch.empty()) throw ShapeError("empty batch");
  std::vector<const EncodedFeatures*> feats;
  for (const auto& ex : batch) feats.push_back(ex.features);
  Cache cache;
  const Predictions p = run(assemble_inputs(feats), &cache);
  const Eigen::Index n = p.cols();

  grads.dense.resize(dense_.size());
  for (std::size_t i = 0; i < dense_.size(); ++i) grads.dense[i] = Eigen::MatrixXd::Zero(dense_[i].rows(), dense_[i].cols());
  grads.embedding.assign(embeddings_.size(), {});

  LossValue out;
  std::array<Eigen::RowVectorXd, kNumTasks> dz;
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    dz[t] = Eigen::RowVectorXd::Zero(n);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const TaskLabel label = batch[static_cast<std::size_t>(j)].labels[t];
      if (label != TaskLabel::kAbsent) ++out.counts[t];
    }
    if (out.counts[t] == 0) continue;
    const double scale = weights[t] / static_cast<double>(out.counts[t]);
    for (Eigen::Index j = 0; j < n; ++j) {
      const TaskLabel label = batch[static_cast<std::size_t>(j)].labels[t];
      if (label == TaskLabel::kAbsent) continue;
      const double raw = p(static_cast<Eigen::Index>(t), j);
      const double q = std::clamp(raw, kProbabilityClip, 1.0 - kProbabilityClip);
      const double y = label == TaskLabel::kPositive ? 1.0 : 0.0;
      sum -= y > 0 ? std::log(q) : std::log(1.0 - q);
      if (raw > kProbabilityClip && raw < 1.0 - kProbabilityClip) dz[t](j) = scale * (raw - y);
    }
    out.per_task[t] = sum / static_cast<double>(out.counts[t]);
    out.total += weights[t] * out.per_task[t];
  }

  // Backward through a ReLU stack; returns the gradient w.r.t. its input.
  auto back_stack = [&](const std::vector<Layer>& layers, const Eigen::MatrixXd& input,
                        const std::vector<Eigen::MatrixXd>& pre, const std::vector<Eigen::MatrixXd>& act,
                        Eigen::MatrixXd d) {
    for (std::size_t k = layers.size(); k-- > 0;) {
      const Eigen::MatrixXd da = d.cwiseProduct((pre[k].array() > 0.0).cast<double>().matrix());
      const Eigen::MatrixXd& h = k == 0 ? input : act[k - 1];
      grads.dense[layers[k].w].noalias() += da * h.transpose();
      grads.dense[layers[k].b] += da.rowwise().sum();
      d.noalias() = dense_[layers[k].w].transpose() * da;
    }
    return d;
  };

  std::vector<Eigen::MatrixXd> d_tower_in(kNumTasks);
  for (std::size_t t = 0; t < kNumTasks; ++t) {
    const auto& tower = towers_[t];
    const Layer& head = tower.back();
    const auto& acts = cache.tower_act[t];
    const Eigen::MatrixXd& last = acts.empty() ? cache.tower_in[t] : acts.back();
    grads.dense[head.w].noalias() += dz[t] * last.transpose();
    grads.dense[head.b](0, 0) += dz[t].sum();
    Eigen::MatrixXd d = dense_[head.w].transpose() * dz[t];
    const std::vector<Layer> hidden(tower.begin(), tower.end() - 1);
    d_tower_in[t] = back_stack(hidden, cache.tower_in[t], cache.tower_pre[t], acts, std::move(d));
  }

  Eigen::MatrixXd dx;
  if (config_.architecture == Architecture::kSharedBottom) {
    Eigen::MatrixXd d_shared = d_tower_in[0] + d_tower_in[1] + d_tower_in[2];
    dx = back_stack(bottom_, cache.x, cache.bottom_pre, cache.bottom_act, std::move(d_shared));
  } else {
    dx = Eigen::MatrixXd::Zero(cache.x.rows(), n);
    std::vector<Eigen::MatrixXd> d_expert(experts_.size());
    for (std::size_t e = 0; e < experts_.size(); ++e) d_expert[e] = Eigen::MatrixXd::Zero(cache.expert_act[e].back().rows(), n);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      const Eigen::MatrixXd& g = cache.gate[t];
      Eigen::MatrixXd dg(g.rows(), n);
      for (std::size_t e = 0; e < experts_.size(); ++e) {
        const auto ei = static_cast<Eigen::Index>(e);
        const Eigen::MatrixXd& h = cache.expert_act[e].back();
        d_expert[e] += d_tower_in[t] * g.row(ei).asDiagonal();
        dg.row(ei) = h.cwiseProduct(d_tower_in[t]).colwise().sum();
      }
      const Eigen::RowVectorXd inner = g.cwiseProduct(dg).colwise().sum();
      const Eigen::MatrixXd da = g.cwiseProduct(dg - inner.replicate(g.rows(), 1));
      grads.dense[gates_[t].w].noalias() += da * cache.x.transpose();
      grads.dense[gates_[t].b] += da.rowwise().sum();
      dx.noalias() += dense_[gates_[t].w].transpose() * da;
    }
    for (std::size_t e = 0; e < experts_.size(); ++e) {
      dx += back_stack(experts_[e], cache.x, cache.expert_pre[e], cache.expert_act[e], std::move(d_expert[e]));
    }
  }

  const auto& fields = encoding_.fields();
  const auto offsets = encoding_.field_offsets();
  for (Eigen::Index j = 0; j < n; ++j) {
    const EncodedFeatures& f = *feats[static_cast<std::size_t>(j)];
    std::size_t lookup = 0;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto width = embeddings_[fields[i].table].cols();
      const Eigen::VectorXd slice = dx.block(static_cast<Eigen::Index>(offsets[i]), j, width, 1);
      auto& table_grad = grads.embedding[fields[i].table];
      auto accumulate = [&](std::uint32_t row, const Eigen::VectorXd& g) {
        auto [it, fresh] = table_grad.try_emplace(row, g);
        if (!fresh) it->second += g;
      };
      if (fields[i].kind == FieldKind::kHistory) {
        if (f.history.empty()) continue;
        const Eigen::VectorXd share = slice / static_cast<double>(f.history.size());
        for (auto row : f.history) accumulate(row, share);
      } else {
        accumulate(f.rows[lookup++], slice);
      }
    }
  }
  return out;
}

}  // namespace sliver
