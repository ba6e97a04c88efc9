#include "posafe/config.hpp"
#include "posafe/experiment.hpp"
#include "posafe/rng.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace posafe;
using nlohmann::json;

TEST(Rollout, ZeroHorizonIsEmpty) {
  const auto sc = make_scenario("navigation");
  Policy expert{"expert", PolicyKind::Expert, nullptr, 0.0, {}};
  const auto tr = rollout(*sc, expert, sc->episode(1, stream::kTestEpisodes, 0), {0, false, {}, 0});
  EXPECT_TRUE(tr.states.empty());
  EXPECT_TRUE(tr.controls.empty());
}

TEST(Rollout, NoiseFreeExpertReplaysDataset) {
  for (const char* name : {"navigation", "manipulation", "driving"}) {
    const auto sc = make_scenario(name, {{"horizon", 50}});
    const auto ep = sc->episode(6, stream::kTrainEpisodes, 0);
    const auto ref = expert_rollout(*sc, ep, 50);
    Policy expert{"expert", PolicyKind::Expert, nullptr, 0.0, {}};
    const auto tr = rollout(*sc, expert, ep, {50, false, {}, 0});
    ASSERT_EQ(tr.states.size(), ref.states.size()) << name;
    for (std::size_t t = 0; t < ref.states.size(); ++t) EXPECT_EQ(tr.states[t], ref.states[t]) << name << " t=" << t;
  }
}

TEST(Rollout, NoiseIsSeeded) {
  const auto sc = make_scenario("navigation", {{"horizon", 30}});
  const auto ep = sc->episode(1, stream::kTestEpisodes, 0);
  Policy expert{"expert", PolicyKind::Expert, nullptr, 0.0, {}};
  Vec scale = Vec::Constant(2, 0.2);
  const auto a = rollout(*sc, expert, ep, {30, true, scale, 5});
  const auto b = rollout(*sc, expert, ep, {30, true, scale, 5});
  const auto c = rollout(*sc, expert, ep, {30, true, scale, 6});
  EXPECT_EQ(a.states.back(), b.states.back());
  EXPECT_NE(a.states.back(), c.states.back());
}

TEST(Metrics, EmptyTracesRejected) {
  const auto sc = make_scenario("navigation");
  std::vector<RolloutTrace> none;
  EXPECT_THROW(evaluate(none, *sc, {}), EmptyTraces);
}

TEST(Metrics, ExpertBenchmarkIsSafe) {
  const auto sc = make_scenario("navigation", {{"horizon", 80}});
  std::vector<Policy> pols = {{"expert", PolicyKind::Expert, nullptr, 0.0, {}}};
  BenchConfig bc;
  bc.seed = 2;
  bc.test_episodes = 3;
  bc.rollouts = 6;
  bc.noise_on = false;
  const auto res = benchmark(*sc, pols, bc);
  ASSERT_EQ(res.size(), 1u);
  const auto& m = res[0].report;
  EXPECT_EQ(m.rollouts, 6u);
  EXPECT_TRUE(m.feasibility);
  EXPECT_GE(m.safety_min, 0.0);
  EXPECT_NEAR(m.mse_mean, 0.0, 1e-20);
  EXPECT_EQ(m.uncertainty.size(), 2);
  std::ostringstream csv;
  write_bench_csv(res, csv);
  EXPECT_EQ(csv.str().substr(0, 7), "policy,");
}

TEST(Ablation, OrdersAndCheck) {
  const auto sc = make_scenario("driving");
  EXPECT_TRUE(sc->poset().is_linear_extension(ablation_fix_order()));
  EXPECT_EQ(ablation_fix_order().order.back(), kObstacle);
  EXPECT_EQ(ablation_wrong_order().order.front(), kObstacle);

  auto row = [](const char* name, double crash, double lane_mean) {
    PolicyResult r;
    r.policy = name;
    r.report.crash_pct = crash;
    r.report.lane_viol_mean = lane_mean;
    return r;
  };
  std::vector<PolicyResult> rows = {row("fix_order", 0, -2.0), row("wrong_order", 30, 0.5), row("hard", 0, 0.1),
                                    row("mixture", 0, 0.4)};
  EXPECT_TRUE(check_ablation(rows).ok());
  rows[1].report.crash_pct = 0;
  EXPECT_FALSE(check_ablation(rows).wrong_order_crashes);
  rows.pop_back();
  EXPECT_THROW(check_ablation(rows), std::invalid_argument);
}

TEST(Timing, ReportShape) {
  const std::vector<std::size_t> batches = {1, 8};
  const auto rep = timing_bench(batches, 3, 1, 1);
  std::ostringstream csv;
  write_timing_csv(rep, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "method,batch,heads,seconds");
  EXPECT_EQ(rep.rows.size(), 2 * batches.size() + 3);
  EXPECT_GT(rep.ratio_at_128, 0.0);
}

TEST(Config, AssignmentParsing) {
  EXPECT_EQ(parse_assignment("a.b=3"), (json{{"a", {{"b", 3}}}}));
  EXPECT_EQ(parse_assignment("name=hello"), (json{{"name", "hello"}}));
  EXPECT_EQ(parse_assignment("x=[1,2]"), (json{{"x", {1, 2}}}));
  EXPECT_THROW(parse_assignment("novalue"), std::invalid_argument);
  EXPECT_THROW(parse_assignment("a..b=1"), std::invalid_argument);
}

TEST(Config, MergeIsStrict) {
  const json base = {{"a", 1}, {"b", {{"c", 2}}}};
  EXPECT_EQ(merge_config(base, {{"b", {{"c", 5}}}})["b"]["c"], 5);
  EXPECT_THROW(merge_config(base, {{"b", {{"d", 5}}}}), std::invalid_argument);
}

TEST(RunConfig, ScenarioSwitchFollowsDefaults) {
  json cfg = default_run_config("navigation");
  EXPECT_EQ(cfg["bench"]["test_episodes"], 24);
  cfg = merge_run_config(cfg, {{"scenario", "driving"}});
  EXPECT_EQ(cfg["bench"]["test_episodes"], 20);
  EXPECT_EQ(cfg["bench"]["noise"], false);
  cfg = merge_run_config(cfg, {{"scenario_overrides", {{"lane_half_width", 2.5}}}});
  EXPECT_EQ(cfg["scenario_overrides"]["lane_half_width"], 2.5);
  EXPECT_THROW(merge_run_config(cfg, {{"train", {{"nope", 1}}}}), std::invalid_argument);
}

TEST(RunConfig, CheckpointHashGuardsScenario) {
  json cfg = default_run_config("navigation");
  cfg["data"]["episodes"] = 2;
  cfg["scenario_overrides"] = {{"horizon", 20}};
  const Experiment exp(cfg);
  const auto m = exp.make_model("hard");
  EXPECT_EQ(m.scenario_hash, exp.scenario_hash());
  cfg["scenario_overrides"]["horizon"] = 21;
  EXPECT_NE(Experiment(cfg).scenario_hash(), exp.scenario_hash());
  EXPECT_THROW(exp.make_model("fix_order"), std::invalid_argument);
  EXPECT_THROW(exp.make_model("unknown"), std::invalid_argument);
}
