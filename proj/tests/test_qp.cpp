#include "posafe/qp.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace posafe;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(Qp, UnconstrainedReturnsReference) {
  const auto sol = solve_qp({vec2(1, 2), {}, 0.0});
  ASSERT_TRUE(sol.ok());
  EXPECT_EQ(sol.control, vec2(1, 2));
  EXPECT_TRUE(sol.active.empty());
}

TEST(Qp, TwoActiveConstraints) {
  // u₀ ≥ 1, u₁ ≥ 2 from the origin → corner (1, 2)
  QpProblem p{vec2(0, 0), {{vec2(1, 0), 1.0, 0}, {vec2(0, 1), 2.0, 1}}, 0.0};
  const auto sol = solve_qp(p);
  ASSERT_TRUE(sol.ok());
  EXPECT_NEAR((sol.control - vec2(1, 2)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(sol.multipliers[0], 1.0, 1e-12);
  EXPECT_NEAR(sol.multipliers[1], 2.0, 1e-12);
}

TEST(Qp, InfeasibleHasFarkasCertificate) {
  QpProblem p{vec2(0, 0), {{vec2(1, 0), 1.0, 0}, {vec2(-1, 0), 1.0, 1}}, 0.0};
  const auto sol = solve_qp(p);
  EXPECT_EQ(sol.status, QpStatus::Infeasible);
  ASSERT_EQ(sol.farkas.size(), 2);
  EXPECT_GE(sol.farkas.minCoeff(), 0.0);
  EXPECT_NEAR((sol.farkas[0] * p.constraints[0].a + sol.farkas[1] * p.constraints[1].a).norm(), 0.0, 1e-12);
  EXPECT_GT(sol.farkas[0] * p.constraints[0].c + sol.farkas[1] * p.constraints[1].c, 0.0);
}

TEST(Qp, SlackAlwaysFeasible) {
  QpProblem p{vec2(0, 0), {{vec2(1, 0), 1.0, 0}, {vec2(-1, 0), 1.0, 1}}, 100.0};
  const auto sol = solve_qp(p);
  ASSERT_TRUE(sol.ok());
  EXPECT_NEAR(sol.control[0], 0.0, 1e-12);
  ASSERT_EQ(sol.slack.size(), 2);
  EXPECT_GT(sol.slack.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Qp, SlackApproachesHardAsWeightGrows) {
  QpProblem p{vec2(0, 0), {{vec2(1, 1), 2.0, 0}}, 1e8};
  const auto sol = solve_qp(p);
  ASSERT_TRUE(sol.ok());
  EXPECT_NEAR((sol.control - vec2(1, 1)).norm(), 0.0, 1e-6);
}

TEST(Qp, RejectsBadShapes) {
  Vec big = Vec::Zero(4);
  EXPECT_THROW(solve_qp({big, {}, 0.0}), std::invalid_argument);
  QpProblem p{vec2(0, 0), {{Vec::Ones(3), 0.0, 0}}, 0.0};
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
  p.constraints.assign(9, {vec2(1, 0), 0.0, 0});
  EXPECT_THROW(solve_qp(p), std::invalid_argument);
  QpProblem neg{vec2(0, 0), {}, -1.0};
  EXPECT_THROW(solve_qp(neg), std::invalid_argument);
}

TEST(Qp, AgreesWithProjectedGradient) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  int compared = 0;
  for (int i = 0; i < 200; ++i) {
    QpProblem p;
    p.reference = Vec(3);
    for (int k = 0; k < 3; ++k) p.reference[k] = 2.0 * n(rng);
    Vec x0(3);
    for (int k = 0; k < 3; ++k) x0[k] = n(rng);
    for (std::size_t j = 0; j < 4; ++j) {
      Vec a(3);
      for (int k = 0; k < 3; ++k) a[k] = n(rng);
      p.constraints.push_back({a, a.dot(x0) - std::abs(n(rng)), j});
    }
    const auto sol = solve_qp(p);
    ASSERT_TRUE(sol.ok());
    for (const auto& h : p.constraints) EXPECT_TRUE(h.contains(sol.control, 1e-9));
    const Vec pg = solve_qp_projected_gradient(p, 20000);
    if ((pg - sol.control).norm() < 1e-5) ++compared;
  }
  EXPECT_GE(compared, 190);
}
