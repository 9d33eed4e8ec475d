#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sliver/features.hpp"
#include "sliver/model.hpp"
#include "sliver/simgen.hpp"

#include "oracles.hpp"

namespace sliver::testing {

// Small hash tables keep finite-difference checks cheap and make row
// collisions (shared gradients) common.
inline FeatureEncoding small_encoding() {
  EncodingOptions o;
  o.hash_buckets = 16;
  return FeatureEncoding::standard(o);
}

template <std::size_t N>
std::string pick(std::mt19937_64& rng, const std::array<std::string_view, N>& values) {
  return std::string(values[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)]);
}

inline std::vector<EncodedFeatures> random_features(const FeatureEncoding& enc, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> id(0, 40);
  std::uniform_int_distribution<std::size_t> state(0, 7);
  std::uniform_int_distribution<std::size_t> hist(0, 4);
  std::vector<EncodedFeatures> out;
  for (std::size_t i = 0; i < n; ++i) {
    UserProfile u;
    u.user_id = "u" + std::to_string(id(rng));
    u.gender = pick(rng, kGenders);
    u.age_bucket = pick(rng, kAgeBuckets);
    u.city = i % 5 == 0 ? "nowhere" : pick(rng, kCities);
    for (std::size_t h = hist(rng); h > 0; --h) u.click_anchor_history.push_back("a" + std::to_string(id(rng)));
    LiveRoomSnapshot l;
    l.live_id = "l" + std::to_string(id(rng));
    l.live_type = content_state_name(state(rng));
    l.anchor_id = "a" + std::to_string(id(rng));
    l.anchor_gender = pick(rng, kGenders);
    l.anchor_type = pick(rng, kAnchorTypes);
    out.push_back(encode(u, l, enc));
  }
  return out;
}

inline std::vector<Example> random_examples(const std::vector<EncodedFeatures>& features, std::uint64_t seed,
                                            double like_absent = 0.4) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5), absent(like_absent);
  std::vector<Example> out;
  for (const auto& f : features) {
    Example ex;
    ex.features = &f;
    for (std::size_t t = 0; t < kNumTasks; ++t) ex.labels[t] = coin(rng) ? TaskLabel::kPositive : TaskLabel::kNegative;
    if (absent(rng)) ex.labels[2] = TaskLabel::kAbsent;
    out.push_back(ex);
  }
  return out;
}

// Zero-initialized biases put pre-activations exactly on the ReLU kink
// whenever a layer's whole input is zero, where the derivative is undefined.
// Small random biases move the check to a point where it is.
inline void jitter_biases(MultiTaskModel& model, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (std::size_t i = 0; i < model.dense().size(); ++i) {
    const auto& name = model.dense_names()[i];
    if (name.ends_with(".b")) {
      for (Eigen::Index k = 0; k < model.dense()[i].size(); ++k) model.dense()[i](k) = u(rng);
    }
  }
}

struct GradientCheckResult {
  double worst_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

// Smallest distance of any ReLU pre-activation from its kink over a batch.
inline double kink_distance(const MultiTaskModel& model, std::span<const Example> batch) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& ex : batch) {
    const EncodedFeatures* one[] = {ex.features};
    const Eigen::MatrixXd x = model.assemble_inputs(one);
    reference_forward(model, std::vector<double>(x.data(), x.data() + x.size()), &d);
  }
  return d;
}

// Central differences against loss_and_gradients. Each parameter tensor (and
// each touched embedding table) is compared by ||a - n|| / (||a|| + ||n||)
// over up to `per_tensor` randomly chosen entries. The step is capped well
// below the kink distance so no difference straddles a ReLU corner.
inline GradientCheckResult gradient_check(MultiTaskModel& model, std::span<const Example> batch,
                                          std::uint64_t seed, std::size_t per_tensor = 400, double h = 1e-5) {
  h = std::max(1e-9, std::min(h, 1e-2 * kink_distance(model, batch)));
  const TaskWeights weights{1.0, 1.0, 1.0};
  Gradients grads;
  model.loss_and_gradients(batch, weights, grads);
  std::mt19937_64 rng(seed);
  GradientCheckResult result;

  auto numeric = [&](double& slot) {
    const double saved = slot;
    slot = saved + h;
    const double up = model.loss(batch, weights).total;
    slot = saved - h;
    const double down = model.loss(batch, weights).total;
    slot = saved;
    return (up - down) / (2.0 * h);
  };
  auto record = [&](const std::string& name, double diff2, double a2, double n2, std::size_t count) {
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double rel = denom > 0.0 ? std::sqrt(diff2) / denom : 0.0;
    result.checked += count;
    if (rel > result.worst_relative_error) {
      result.worst_relative_error = rel;
      result.worst_parameter = name;
    }
  };

  for (std::size_t i = 0; i < model.dense().size(); ++i) {
    auto& p = model.dense()[i];
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = static_cast<Eigen::Index>(k);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > per_tensor) idx.resize(per_tensor);
    double diff2 = 0, a2 = 0, n2 = 0;
    for (auto k : idx) {
      const double a = grads.dense[i](k % p.rows(), k / p.rows());
      const double n = numeric(p(k % p.rows(), k / p.rows()));
      diff2 += (a - n) * (a - n);
      a2 += a * a;
      n2 += n * n;
    }
    record(model.dense_names()[i], diff2, a2, n2, idx.size());
  }

  for (std::size_t t = 0; t < model.embeddings().size(); ++t) {
    auto& table = model.embeddings()[t];
    double diff2 = 0, a2 = 0, n2 = 0;
    std::size_t count = 0;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
      auto it = grads.embedding[t].find(static_cast<std::uint32_t>(r));
      for (Eigen::Index c = 0; c < table.cols(); ++c) {
        const double n = numeric(table(r, c));
        const double a = it == grads.embedding[t].end() ? 0.0 : it->second(c);
        diff2 += (a - n) * (a - n);
        a2 += a * a;
        n2 += n * n;
        ++count;
      }
    }
    record("embedding." + model.encoding().tables()[t].name, diff2, a2, n2, count);
  }
  return result;
}

}  // namespace sliver::testing
