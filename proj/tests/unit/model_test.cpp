#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sliver/errors.hpp"
#include "sliver/model.hpp"

namespace sliver {
namespace {

ModelConfig config_for(Architecture arch) {
  ModelConfig c;
  c.architecture = arch;
  return c;
}

std::size_t dense_count(std::size_t in, const std::vector<std::size_t>& widths) {
  std::size_t n = 0;
  for (std::size_t w : widths) {
    n += in * w + w;
    in = w;
  }
  return n;
}

class BothArchitectures : public ::testing::TestWithParam<Architecture> {};

INSTANTIATE_TEST_SUITE_P(Model, BothArchitectures,
                         ::testing::Values(Architecture::kSharedBottom, Architecture::kMMoE),
                         [](const auto& info) { return info.param == Architecture::kMMoE ? "MMoE" : "SharedBottom"; });

TEST_P(BothArchitectures, ParameterCountMatchesShapes) {
  const auto enc = FeatureEncoding::standard();
  const MultiTaskModel model(enc, config_for(GetParam()), 1);
  const std::size_t in = enc.input_width();
  std::size_t expected = 0;
  for (const auto& t : enc.tables()) expected += t.rows * t.width;
  if (GetParam() == Architecture::kSharedBottom) {
    expected += dense_count(in, {64, 32});
  } else {
    expected += 3 * dense_count(in, {64, 32});
    expected += 3 * (in * 3 + 3);
  }
  expected += 3 * dense_count(32, {32, 32, 16, 1});
  EXPECT_EQ(model.num_parameters(), expected);
}

TEST_P(BothArchitectures, ZeroWeightsPredictOneHalf) {
  const auto enc = testing::small_encoding();
  MultiTaskModel model(enc, config_for(GetParam()), 2);
  for (auto& p : model.dense()) p.setZero();
  const auto feats = testing::random_features(enc, 5, 1);
  std::vector<const EncodedFeatures*> batch;
  for (const auto& f : feats) batch.push_back(&f);
  const Predictions p = model.predict(batch);
  EXPECT_TRUE((p.array() == 0.5).all());
}

TEST_P(BothArchitectures, ForwardMatchesScalarReference) {
  const auto enc = testing::small_encoding();
  const MultiTaskModel model(enc, config_for(GetParam()), 7);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto width = static_cast<Eigen::Index>(model.input_width());
  Eigen::MatrixXd x(width, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const Predictions p = model.forward(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const std::vector<double> col(x.col(j).data(), x.col(j).data() + width);
    const auto ref = testing::reference_forward(model, col);
    for (std::size_t t = 0; t < kNumTasks; ++t) {
      EXPECT_NEAR(p(static_cast<Eigen::Index>(t), j), ref[t], 1e-12);
      EXPECT_GT(ref[t], 0.0);
      EXPECT_LT(ref[t], 1.0);
    }
  }
}

TEST_P(BothArchitectures, ShapeMismatchThrows) {
  const MultiTaskModel model(testing::small_encoding(), config_for(GetParam()), 1);
  EXPECT_THROW(model.forward(Eigen::MatrixXd::Zero(3, 2)), ShapeError);
  EncodedFeatures bad;
  bad.rows = {1, 2};
  const EncodedFeatures* batch[] = {&bad};
  EXPECT_THROW(model.predict(batch), ShapeError);
}

TEST_P(BothArchitectures, PredictionIsPure) {
  const auto enc = testing::small_encoding();
  const MultiTaskModel model(enc, config_for(GetParam()), 4);
  const auto feats = testing::random_features(enc, 8, 2);
  std::vector<const EncodedFeatures*> batch;
  for (const auto& f : feats) batch.push_back(&f);
  const Predictions a = model.predict(batch);
  const auto dense = model.dense();
  EXPECT_EQ(model.predict(batch), a);
  EXPECT_EQ(model.predict(feats[3])[1], a(1, 3));
  for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_EQ(model.dense()[i], dense[i]);
}

TEST_P(BothArchitectures, SameSeedSameParameters) {
  const auto enc = testing::small_encoding();
  const MultiTaskModel a(enc, config_for(GetParam()), 9), b(enc, config_for(GetParam()), 9),
      c(enc, config_for(GetParam()), 10);
  EXPECT_EQ(a.dense(), b.dense());
  EXPECT_EQ(a.embeddings(), b.embeddings());
  EXPECT_NE(a.dense(), c.dense());
}

TEST(MMoE, GatesAreSoftmaxColumns) {
  const auto enc = testing::small_encoding();
  const MultiTaskModel model(enc, config_for(Architecture::kMMoE), 3);
  const auto feats = testing::random_features(enc, 10, 4);
  std::vector<const EncodedFeatures*> batch;
  for (const auto& f : feats) batch.push_back(&f);
  const auto gates = model.gates(model.assemble_inputs(batch));
  ASSERT_EQ(gates.size(), kNumTasks);
  for (const auto& g : gates) {
    EXPECT_EQ(g.rows(), 3);
    EXPECT_TRUE((g.array() > 0.0).all());
    for (Eigen::Index j = 0; j < g.cols(); ++j) EXPECT_NEAR(g.col(j).sum(), 1.0, 1e-12);
  }
  const MultiTaskModel sb(enc, config_for(Architecture::kSharedBottom), 3);
  EXPECT_TRUE(sb.gates(sb.assemble_inputs(batch)).empty());
}

TEST(MMoE, IdenticalExpertsMakeGatesIrrelevant) {
  const auto enc = testing::small_encoding();
  MultiTaskModel model(enc, config_for(Architecture::kMMoE), 3);
  for (std::size_t i = 0; i < model.dense().size(); ++i) {
    const auto& name = model.dense_names()[i];
    if (name.rfind("expert.", 0) == 0 && name.rfind("expert.0.", 0) != 0) {
      model.dense()[i] = model.dense()[model.dense_index("expert.0." + name.substr(9))];
    }
  }
  const auto feats = testing::random_features(enc, 6, 1);
  std::vector<const EncodedFeatures*> batch;
  for (const auto& f : feats) batch.push_back(&f);
  const Predictions before = model.predict(batch);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (Task t : kAllTasks) {
    auto& w = model.dense()[model.dense_index("gate." + std::string(to_string(t)) + ".w")];
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  }
  EXPECT_TRUE(model.predict(batch).isApprox(before, 1e-12));
}

TEST(Loss, OneHalfOnAPositiveIsLnTwo) {
  const auto enc = testing::small_encoding();
  MultiTaskModel model(enc, ModelConfig{}, 1);
  for (auto& p : model.dense()) p.setZero();
  const auto feats = testing::random_features(enc, 1, 1);
  const Example ex{&feats[0], {TaskLabel::kPositive, TaskLabel::kNegative, TaskLabel::kPositive}};
  const auto loss = model.loss(std::span(&ex, 1), {1.0, 1.0, 1.0});
  for (double l : loss.per_task) EXPECT_NEAR(l, std::log(2.0), 1e-15);
  EXPECT_NEAR(loss.total, 3.0 * std::log(2.0), 1e-14);
}

TEST(Loss, ConfidentCorrectPredictionsClipNearZero) {
  const auto enc = testing::small_encoding();
  MultiTaskModel model(enc, ModelConfig{}, 1);
  for (Task t : kAllTasks) model.dense()[model.dense_index("tower." + std::string(to_string(t)) + ".out.b")](0, 0) = 60.0;
  const auto feats = testing::random_features(enc, 4, 1);
  std::vector<Example> batch;
  for (const auto& f : feats) batch.push_back({&f, {TaskLabel::kPositive, TaskLabel::kPositive, TaskLabel::kPositive}});
  const auto loss = model.loss(batch, {1.0, 1.0, 1.0});
  for (double l : loss.per_task) {
    EXPECT_GT(l, 0.0);
    EXPECT_LT(l, 2e-7);
  }
  Gradients g;
  model.loss_and_gradients(batch, {1.0, 1.0, 1.0}, g);
  for (const auto& d : g.dense) EXPECT_TRUE(d.isZero());
}

TEST(Loss, AbsentLikeContributesNothing) {
  const auto enc = testing::small_encoding();
  const MultiTaskModel model(enc, ModelConfig{}, 1);
  const auto feats = testing::random_features(enc, 10, 3);
  auto batch = testing::random_examples(feats, 4, 1.0);
  const auto a = model.loss(batch, {1.0, 1.0, 1.0});
  const auto b = model.loss(batch, {1.0, 1.0, 7.5});
  EXPECT_EQ(a.per_task[2], 0.0);
  EXPECT_EQ(a.counts[2], 0u);
  EXPECT_EQ(a.total, b.total);
}

TEST_P(BothArchitectures, AbsentLikeGivesExactlyZeroLikeGradients) {
  const auto enc = testing::small_encoding();
  const MultiTaskModel model(enc, config_for(GetParam()), 6);
  const auto feats = testing::random_features(enc, 10, 3);
  const auto batch = testing::random_examples(feats, 4, 1.0);
  Gradients g;
  model.loss_and_gradients(batch, {1.0, 1.0, 1.0}, g);
  for (std::size_t i = 0; i < g.dense.size(); ++i) {
    if (model.dense_owner(i) == Task::kLike) EXPECT_TRUE((g.dense[i].array() == 0.0).all()) << model.dense_names()[i];
  }

  // Removing the like label from one sample leaves the gradient equal to the
  // gradient of the batch without that sample's like term.
  auto mixed = testing::random_examples(feats, 5, 0.0);
  Gradients with, without;
  mixed[0].labels[2] = TaskLabel::kAbsent;
  model.loss_and_gradients(mixed, {0.0, 0.0, 1.0}, with);
  std::vector<Example> rest(mixed.begin() + 1, mixed.end());
  model.loss_and_gradients(rest, {0.0, 0.0, 1.0}, without);
  for (std::size_t i = 0; i < with.dense.size(); ++i) {
    EXPECT_TRUE(with.dense[i].isApprox(without.dense[i], 1e-12) || with.dense[i].isZero());
  }
}

TEST_P(BothArchitectures, GradientsMatchFiniteDifferences) {
  const auto enc = testing::small_encoding();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MultiTaskModel model(enc, config_for(GetParam()), seed);
    testing::jitter_biases(model, seed);
    const auto feats = testing::random_features(enc, 10, seed + 100);
    const auto batch = testing::random_examples(feats, seed + 200);
    const auto r = testing::gradient_check(model, batch, seed, 150);
    EXPECT_LT(r.worst_relative_error, 1e-4) << "seed " << seed << " worst " << r.worst_parameter;
  }
}

TEST_P(BothArchitectures, XavierVarianceOfWideLayer) {
  auto cfg = config_for(GetParam());
  cfg.bottom_hidden = {128, 32};
  cfg.expert_hidden = {128, 32};
  const MultiTaskModel model(FeatureEncoding::standard(), cfg, 11);
  const std::string name = GetParam() == Architecture::kMMoE ? "expert.0.0.w" : "bottom.0.w";
  const auto& w = model.dense()[model.dense_index(name)];
  ASSERT_GE(w.size(), 10'000);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / static_cast<double>(w.size());
  const double expected = 2.0 / static_cast<double>(w.rows() + w.cols());
  EXPECT_NEAR(var, expected, 0.1 * expected);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols())));
  EXPECT_TRUE(model.dense()[model.dense_index(name.substr(0, name.size() - 1) + "b")].isZero());

  const auto& emb = model.embeddings().front();
  const double emb_var = (emb.array() - emb.mean()).square().mean();
  EXPECT_NEAR(emb_var, 0.05 * 0.05 / 3.0, 0.1 * 0.05 * 0.05 / 3.0);
}

TEST(Fusion, WeightedSum) {
  EXPECT_NEAR(fusion_score({0.2, 0.3, 0.5}, {1.0, 1.0, 1.0}), 1.0, 1e-15);
  EXPECT_EQ(fusion_score({0.2, 0.3, 0.5}, {1.0, 0.0, 0.0}), 0.2);
}

TEST(Fusion, PositiveRescalingKeepsArgmax) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::array<double, kNumTasks>> cands(8);
    for (auto& c : cands) c = {u(rng), u(rng), u(rng)};
    const TaskWeights alpha{u(rng), u(rng), u(rng)};
    const double k = 0.1 + 10.0 * u(rng);
    const TaskWeights scaled{k * alpha[0], k * alpha[1], k * alpha[2]};
    auto argmax = [&](const TaskWeights& a) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < cands.size(); ++i) {
        if (fusion_score(cands[i], a) > fusion_score(cands[best], a)) best = i;
      }
      return best;
    };
    EXPECT_EQ(argmax(alpha), argmax(scaled));
  }
}

TEST(Architecture, Names) {
  EXPECT_EQ(parse_architecture("mmoe"), Architecture::kMMoE);
  EXPECT_EQ(parse_architecture(to_string(Architecture::kSharedBottom)), Architecture::kSharedBottom);
  EXPECT_THROW(parse_architecture("ple"), ConfigError);
}

}  // namespace
}  // namespace sliver
