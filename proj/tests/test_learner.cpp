#include "posafe/learner.hpp"
#include "posafe/rng.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace posafe;

namespace {

struct Fixture {
  std::unique_ptr<Scenario> sc = make_scenario("navigation", {{"horizon", 40}});
  Dataset data = generate_dataset(*sc, 3, 4, 40);
  std::vector<TrainingSample> samples;

  Fixture() {
    std::vector<std::size_t> idx(data.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    samples = build_samples(*sc, data, idx);
  }
};

Mat gumbel_noise(std::size_t heads, std::size_t batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat g(static_cast<Eigen::Index>(heads), static_cast<Eigen::Index>(batch));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gumbel_from_uniform(u(rng));
  return g;
}

}  // namespace

TEST(Model, LayoutAndInit) {
  Fixture f;
  const Model m = Model::posafenet(*f.sc, CombineMode::Mixture, 3, {5, 8, 2}, 1);
  EXPECT_EQ(m.heads(), 3u);
  EXPECT_EQ(m.constraints(), 3u);
  const std::size_t per_head = 5 * 8 + 8 + 8 * 2 + 2;
  EXPECT_EQ(m.mlp_range().size, 3 * per_head);
  EXPECT_EQ(m.gains_range().size, 6u);
  EXPECT_EQ(m.params().size(), static_cast<Eigen::Index>(3 * per_head + 6 + 3));
  EXPECT_NEAR(m.gains(0)[0], softplus(0.5), 1e-15);
  EXPECT_EQ(m.logits(), Vec::Zero(3));
  for (const auto& e : m.extensions()) EXPECT_TRUE(f.sc->poset().is_linear_extension(e));
  const Model again = Model::posafenet(*f.sc, CombineMode::Mixture, 3, {5, 8, 2}, 1);
  EXPECT_EQ(m.params(), again.params());
}

TEST(Model, RejectsBadShapes) {
  Fixture f;
  EXPECT_THROW(Model::posafenet(*f.sc, CombineMode::Hard, 2, {4, 8, 2}, 1), std::invalid_argument);
  EXPECT_THROW(Model::posafenet(*f.sc, CombineMode::Hard, 2, {5}, 1), std::invalid_argument);
}

TEST(Model, JsonRoundTrip) {
  Fixture f;
  Model m = Model::posafenet(*f.sc, CombineMode::Hard, 2, {5, 6, 2}, 4);
  m.scenario_name = "navigation";
  m.scenario_hash = "abc";
  const Model back = Model::from_json(nlohmann::json::parse(m.to_json().dump()));
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.extensions(), m.extensions());
  EXPECT_EQ(back.mode(), CombineMode::Hard);
  EXPECT_EQ(back.scenario_hash, "abc");
  auto broken = m.to_json();
  broken["params"].erase(broken["params"].begin());
  EXPECT_THROW(Model::from_json(broken), std::exception);
}

TEST(Model, ActOutputSatisfiesTopConstraint) {
  Fixture f;
  const Model m = Model::posafenet(*f.sc, CombineMode::Hard, 6, {5, 8, 2}, 2);
  for (const auto& s : f.samples) {
    const auto out = m.act(s.z, s.terms);
    const auto hs = m.halfspaces(s.terms);
    const auto& ext = m.extensions()[*out.selected];
    EXPECT_TRUE(hs[ext.order.back()].contains(out.control, 1e-8));
  }
}

TEST(Learner, GradientsMatchFiniteDifferences) {
  Fixture f;
  for (CombineMode mode : {CombineMode::Mixture, CombineMode::Gumbel}) {
    Model m = Model::posafenet(*f.sc, mode, 3, {5, 6, 2}, 7);
    std::vector<std::size_t> batch = {0, 17, 33, 60, 101};
    const Mat g = gumbel_noise(3, batch.size(), 8);
    for (const auto& grp : gradient_check(m, f.samples, batch, Phase::Training, &g)) {
      EXPECT_LT(grp.rel_error, 1e-5) << to_string(mode) << " " << grp.name;
      EXPECT_GT(grp.grad_norm, 0.0) << to_string(mode) << " " << grp.name;
    }
  }
}

TEST(Learner, TrainingReducesLoss) {
  Fixture f;
  Model m = Model::posafenet(*f.sc, CombineMode::Mixture, 2, {5, 16, 2}, 5);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  const auto r = train(m, *f.sc, f.data, cfg);
  ASSERT_EQ(r.curve.size(), 8u);
  EXPECT_LT(r.curve.back().train_mse, r.curve.front().train_mse);
  EXPECT_GT(r.val_samples, 0u);
}

TEST(Learner, CurveIsDeterministic) {
  Fixture f;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  std::string curves[2];
  for (auto& out : curves) {
    Model m = Model::posafenet(*f.sc, CombineMode::Gumbel, 2, {5, 8, 2}, 5);
    std::ostringstream ss;
    write_curve_csv(train(m, *f.sc, f.data, cfg).curve, ss);
    out = ss.str();
  }
  EXPECT_EQ(curves[0], curves[1]);
  EXPECT_EQ(curves[0].substr(0, curves[0].find('\n')), "epoch,train_mse,val_mse");
}

TEST(Learner, DivergenceIsReported) {
  Fixture f;
  Model m = Model::unconstrained({5, 8, 2}, 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e200;
  EXPECT_THROW(train(m, *f.sc, f.data, cfg), NonFiniteLoss);
}

TEST(Learner, EmptyDatasetRejected) {
  Fixture f;
  Model m = Model::unconstrained({5, 8, 2}, 1);
  Dataset empty = generate_dataset(*f.sc, 1, 1, 0);
  EXPECT_THROW(train(m, *f.sc, empty, TrainConfig{}), std::invalid_argument);
}
