#include "posafe/dataset.hpp"
#include "posafe/rng.hpp"
#include "posafe/scenarios.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace posafe;

TEST(Scenarios, PosetShapes) {
  EXPECT_EQ(make_scenario("navigation")->poset().enumerate_linear_extensions(100).size(), 6u);
  EXPECT_EQ(make_scenario("manipulation")->poset().enumerate_linear_extensions(100).size(), 2u);
  const auto drive = make_scenario("driving");
  EXPECT_EQ(drive->poset().maximal_elements(), std::vector<std::size_t>{kObstacle});
  EXPECT_EQ(drive->poset().enumerate_linear_extensions(100).size(), 2u);
  const auto drive4 = make_scenario("driving4");
  EXPECT_EQ(drive4->constraint_count(), 7u);
  EXPECT_EQ(drive4->poset().maximal_elements(), std::vector<std::size_t>{kObstacle});
}

TEST(Scenarios, UnknownNameAndKeysRejected) {
  EXPECT_THROW(make_scenario("flying"), std::invalid_argument);
  EXPECT_THROW(make_scenario("navigation", {{"no_such_key", 1}}), std::invalid_argument);
  EXPECT_THROW(make_scenario("navigation", {{"dt", -1.0}}), std::invalid_argument);
  const auto sc = make_scenario("navigation", {{"horizon", 12}});
  EXPECT_EQ(sc->horizon(), 12u);
}

TEST(Scenarios, EpisodesAreDeterministic) {
  for (const auto& name : scenario_names()) {
    const auto sc = make_scenario(name);
    const auto a = sc->episode(5, stream::kTrainEpisodes, 3);
    const auto b = sc->episode(5, stream::kTrainEpisodes, 3);
    const auto c = sc->episode(5, stream::kTestEpisodes, 3);
    EXPECT_EQ(a.initial_state, b.initial_state) << name;
    EXPECT_NE(a.initial_state, c.initial_state) << name;
  }
}

TEST(Scenarios, ExpertFarFromHazardsEqualsReference) {
  const auto sc = make_scenario("navigation");
  Episode ep = sc->episode(1, stream::kTrainEpisodes, 0);
  ep.obstacles = {Disk{100.0, 100.0, 1.0}, Disk{-100.0, 100.0, 1.0}, Disk{100.0, -100.0, 1.0}};
  const auto specs = sc->barriers(ep);
  const Vec x = ep.initial_state;
  const auto res = expert_control(*sc, specs, x, ep);
  ASSERT_TRUE(res.feasible);
  EXPECT_NEAR((res.control - res.reference).norm(), 0.0, 1e-12);
}

TEST(Scenarios, NavigationExpertSatisfiesConstraints) {
  const auto sc = make_scenario("navigation");
  for (std::size_t e = 0; e < 10; ++e) {
    const auto ep = sc->episode(2, stream::kTrainEpisodes, e);
    const auto specs = sc->barriers(ep);
    const auto traj = expert_rollout(*sc, ep, sc->horizon());
    EXPECT_TRUE(traj.termination.empty());
    for (std::size_t t = 0; t < traj.controls.size(); ++t) {
      if (!traj.feasible[t]) continue;
      for (std::size_t j = 0; j < specs.size(); ++j) {
        const auto h = compile_halfspace(specs[j], sc->system(), traj.states[t], j);
        EXPECT_TRUE(h.contains(traj.controls[t], 1e-7));
      }
    }
  }
}

TEST(Scenarios, ManipulationExpertIgnoresJointLimits) {
  const auto sc = make_scenario("manipulation");
  EXPECT_EQ(sc->expert_constraints(), std::vector<std::size_t>{0});
}

TEST(Scenarios, DrivingExpertNeverHitsFrameSingularity) {
  const auto sc = make_scenario("driving");
  for (std::size_t e = 0; e < 10; ++e) {
    const auto traj = expert_rollout(*sc, sc->episode(3, stream::kTrainEpisodes, e), sc->horizon());
    EXPECT_TRUE(traj.termination.empty()) << traj.termination;
    EXPECT_EQ(traj.states.size(), sc->horizon() + 1);
  }
}

TEST(Scenarios, BicycleSingularityThrows) {
  BicycleParams p;
  p.curvature = {{0.0, 1.0}};  // radius 1: d = 1 is the centre of curvature
  CurvilinearBicycle sys(p);
  Vec x = Vec::Zero(5);
  x[1] = 1.0;
  x[3] = 5.0;
  EXPECT_THROW(sys.drift(x), FrameSingularity);
}

TEST(Dataset, CsvRoundTrip) {
  const auto sc = make_scenario("navigation", {{"horizon", 20}});
  const auto data = generate_dataset(*sc, 4, 3, 20);
  EXPECT_EQ(data.samples.size() + data.expert_failures, 60u);
  std::stringstream ss;
  write_dataset_csv(data, *sc, ss);
  std::string header;
  std::getline(std::istringstream(ss.str()), header);
  EXPECT_EQ(header, "episode,t,x,y,theta,v,u_turn_rate,u_accel,b_obstacle0,b_obstacle1,b_obstacle2");
  const auto back = read_dataset_csv(*sc, ss, 4, 20);
  ASSERT_EQ(back.samples.size(), data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].state, data.samples[i].state);
    EXPECT_EQ(back.samples[i].control, data.samples[i].control);
  }
  EXPECT_EQ(back.episodes.size(), 3u);
}

TEST(Dataset, ZeroHorizonIsEmpty) {
  const auto sc = make_scenario("navigation");
  const auto data = generate_dataset(*sc, 1, 4, 0);
  EXPECT_TRUE(data.samples.empty());
  EXPECT_EQ(data.episodes.size(), 4u);
}

TEST(Dataset, BadCsvRejected) {
  const auto sc = make_scenario("navigation");
  std::istringstream empty("");
  EXPECT_THROW(read_dataset_csv(*sc, empty, 1, 10), std::runtime_error);
  std::istringstream wrong("a,b\n1,2\n");
  EXPECT_THROW(read_dataset_csv(*sc, wrong, 1, 10), std::runtime_error);
}

TEST(Dataset, SameSeedSameBytes) {
  const auto sc = make_scenario("manipulation", {{"horizon", 30}});
  std::stringstream a, b;
  write_dataset_csv(generate_dataset(*sc, 9, 2, 30), *sc, a);
  write_dataset_csv(generate_dataset(*sc, 9, 2, 30), *sc, b);
  EXPECT_EQ(a.str(), b.str());
}
