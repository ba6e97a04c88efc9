#include "posafe/poset.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace posafe;

TEST(Poset, ClosureIsTransitive) {
  SafetyPoset p(3, {{0, 1}, {1, 2}});
  EXPECT_TRUE(p.precedes(0, 2));
  EXPECT_FALSE(p.precedes(2, 0));
  EXPECT_EQ(p.covering_relations(), (std::vector<Relation>{{0, 1}, {1, 2}}));
  EXPECT_EQ(p.maximal_elements(), std::vector<std::size_t>{2});
}

TEST(Poset, CycleReportsPath) {
  const std::vector<Relation> rels = {{0, 1}, {1, 2}, {2, 0}};
  const auto report = validate(3, rels);
  EXPECT_FALSE(report.ok);
  EXPECT_EQ(report.kind, PosetErrorKind::CycleDetected);
  ASSERT_GE(report.cycle.size(), 4u);
  EXPECT_EQ(report.cycle.front(), report.cycle.back());
  try {
    SafetyPoset bad(3, rels);
    FAIL() << "cycle accepted";
  } catch (const PosetError& e) {
    EXPECT_EQ(e.kind(), PosetErrorKind::CycleDetected);
  }
}

TEST(Poset, RejectsSelfAndOutOfRange) {
  EXPECT_THROW(SafetyPoset(2, {{1, 1}}), PosetError);
  EXPECT_THROW(SafetyPoset(2, {{0, 5}}), PosetError);
}

TEST(Poset, AntichainHasAllPermutations) {
  const auto exts = SafetyPoset::antichain(4).enumerate_linear_extensions(1000);
  EXPECT_EQ(exts.size(), 24u);
  EXPECT_TRUE(std::is_sorted(exts.begin(), exts.end()));
}

TEST(Poset, ChainHasOneExtension) {
  SafetyPoset p(3, {{2, 0}, {0, 1}});
  const auto exts = p.enumerate_linear_extensions(10);
  ASSERT_EQ(exts.size(), 1u);
  EXPECT_EQ(exts[0].order, (std::vector<std::size_t>{2, 0, 1}));
}

TEST(Poset, ManipulationShapeHasTwoExtensions) {
  // obstacle below both joint limits
  SafetyPoset p(3, {{0, 1}, {0, 2}});
  const auto exts = p.enumerate_linear_extensions(10);
  ASSERT_EQ(exts.size(), 2u);
  for (const auto& e : exts) {
    EXPECT_EQ(e.order.front(), 0u);
    EXPECT_TRUE(p.is_linear_extension(e));
  }
}

TEST(Poset, LimitTruncates) {
  EXPECT_EQ(SafetyPoset::antichain(5).enumerate_linear_extensions(7).size(), 7u);
}

TEST(Poset, SampledExtensionIsValid) {
  SafetyPoset p(5, {{0, 3}, {1, 3}, {3, 4}});
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_TRUE(p.is_linear_extension(p.sample_linear_extension(s)));
  EXPECT_EQ(p.sample_linear_extension(9), p.sample_linear_extension(9));
}

TEST(Poset, EmptyPoset) {
  SafetyPoset p = SafetyPoset::antichain(0);
  const auto exts = p.enumerate_linear_extensions(10);
  ASSERT_EQ(exts.size(), 1u);
  EXPECT_TRUE(exts[0].order.empty());
}

TEST(Poset, TextRoundTrip) {
  SafetyPoset p(4, {{0, 1}, {1, 2}, {0, 3}});
  EXPECT_EQ(parse_poset_text(to_poset_text(p)), p);
  EXPECT_EQ(parse_poset_text("# comment\nn=2\n\n0 < 1\n"), SafetyPoset(2, {{0, 1}}));
  EXPECT_THROW(parse_poset_text("0 < 1\n"), PosetError);
  EXPECT_THROW(parse_poset_text("n=2\n0 > 1\n"), PosetError);
}

TEST(Poset, DotListsCoveringEdges) {
  SafetyPoset p(3, {{0, 1}, {1, 2}});
  const auto dot = to_dot(p, {"a", "b", "c"});
  EXPECT_NE(dot.find("c0 -> c1"), std::string::npos);
  EXPECT_NE(dot.find("c1 -> c2"), std::string::npos);
  EXPECT_EQ(dot.find("c0 -> c2"), std::string::npos);
  EXPECT_NE(dot.find("\"b\""), std::string::npos);
}
