#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "expmarket/market.hpp"
#include "helpers.hpp"

using namespace expmarket;
using namespace testutil;

namespace {

Patch patch_with_inliers(const std::vector<std::uint64_t>& inliers) {
  Graph g;
  for (std::size_t i = 0; i < inliers.size(); ++i) g.insert_node(make_node(i + 1, {0.0}, inliers[i]));
  return make_patch(Graph{}, g);
}

Belief belief_from(RobotId seller, std::initializer_list<double> values) {
  Belief b{seller};
  for (double v : values) b = update_belief(b, Measurement{seller, 0, v, {}});
  return b;
}

const ChoicePolicy kInliers{ChoiceKind::Inliers, nullptr};

}  // namespace

TEST(Belief, FirstObservation) {
  const auto b = belief_from(3, {7.5});
  EXPECT_EQ(b.count, 1u);
  EXPECT_DOUBLE_EQ(b.mean, 7.5);
  EXPECT_DOUBLE_EQ(b.m2, 0.0);
  EXPECT_DOUBLE_EQ(b.variance(), 0.0);
  EXPECT_TRUE(b.initialized());
}

TEST(Belief, WorkedExample) {
  const auto b = belief_from(1, {2.0, 4.0, 6.0});
  EXPECT_DOUBLE_EQ(b.mean, 4.0);
  EXPECT_DOUBLE_EQ(b.m2, 8.0);
  EXPECT_DOUBLE_EQ(b.variance(), 4.0);
}

TEST(Belief, WrongSellerRejected) {
  EXPECT_THROW(update_belief(Belief{1}, Measurement{2, 0, 1.0, {}}), Error);
}

TEST(Belief, MatchesTwoPassOracle) {
  Rng rng(5);
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.normal(rng.uniform(-100, 100), rng.uniform(0.1, 10));
    Belief b{0};
    for (double x : xs) b = update_belief(b, Measurement{0, 0, x, {}});
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(b.mean, mean, 1e-9 * std::max(1.0, std::abs(mean)));
    if (n > 1) {
      EXPECT_NEAR(b.variance(), ss / static_cast<double>(n - 1), 1e-9 * std::max(1.0, ss));
    }
  }
}

TEST(Price, MeanOfInsertedScores) {
  EXPECT_DOUBLE_EQ(price_patch(patch_with_inliers({5, 9, 7}), kInliers), 7.0);
  EXPECT_DOUBLE_EQ(price_patch(patch_with_inliers({4}), kInliers), 4.0);
}

TEST(Price, EmptyPatchRejected) {
  try {
    price_patch(Patch{}, kInliers);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyPatch);
  }
}

TEST(Price, DuplicatingScoresKeepsPrice) {
  EXPECT_DOUBLE_EQ(price_patch(patch_with_inliers({3, 11, 3, 11}), kInliers),
                   price_patch(patch_with_inliers({3, 11}), kInliers));
}

TEST(Price, NonScoringPolicyRejected) {
  EXPECT_THROW(price_patch(patch_with_inliers({1}), ChoicePolicy{ChoiceKind::Lhs, nullptr}), Error);
}

TEST(Sample, KeepsHighestScores) {
  const auto s = sample_for_query(patch_with_inliers({5, 9, 7}), SamplingBudget{2, 512}, kInliers);
  std::set<NodeId> ids;
  for (const Node* n : s.inserted_nodes()) ids.insert(n->id);
  EXPECT_EQ(ids, (std::set<NodeId>{nid(2), nid(3)}));
  EXPECT_EQ((SamplingBudget{2, 512}.bytes_for(s)), 1024u);
}

TEST(Sample, TiesBySmallestId) {
  const auto s = sample_for_query(patch_with_inliers({4, 4, 4}), SamplingBudget{1, 1}, kInliers);
  ASSERT_EQ(s.insert_count(), 1u);
  EXPECT_EQ(s.inserted_nodes().front()->id, nid(1));
}

TEST(Sample, KeepsEdgesAmongChosen) {
  Graph g;
  for (std::uint64_t i = 1; i <= 3; ++i) g.insert_node(make_node(i, {0.0}, 10 * i));
  g.insert_edge(Edge{nid(3), nid(2), Pose{}});
  g.insert_edge(Edge{nid(2), nid(1), Pose{}});
  const auto s = sample_for_query(make_patch(Graph{}, g), SamplingBudget{2, 1}, kInliers);
  const Graph out = apply_patch(Graph{}, s);
  EXPECT_TRUE(out.edge(nid(3), nid(2)));
  EXPECT_EQ(out.edge_count(), 1u);
}

TEST(Sample, ZeroBudgetRejected) {
  EXPECT_THROW(sample_for_query(patch_with_inliers({1}), SamplingBudget{0, 1}, kInliers), Error);
}

TEST(Adjudicate, WorkedExample) {
  const std::map<RobotId, Belief> beliefs{{1, belief_from(1, {5.0})}, {2, belief_from(2, {10.0})}};
  EXPECT_EQ(adjudicate({{1, 7.0}, {2, 8.0}}, beliefs), 1u);
  EXPECT_EQ(adjudicate({{1, 7.0}, {2, 9.5}}, beliefs), 2u);
}

TEST(Adjudicate, TieToSmallerId) {
  const std::map<RobotId, Belief> beliefs{{4, belief_from(4, {5.0})}, {2, belief_from(2, {5.0})}};
  EXPECT_EQ(adjudicate({{4, 6.0}, {2, 4.0}}, beliefs), 2u);
}

TEST(Adjudicate, NoEligibleSellers) {
  try {
    adjudicate({{1, 3.0}}, {{1, Belief{1}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoEligibleSellers);
  }
  EXPECT_EQ(adjudicate({{1, 3.0}, {2, 100.0}}, {{2, belief_from(2, {0.0})}}), 2u);
}

TEST(Adjudicate, IndependentOfInsertionOrder) {
  Rng rng(8);
  for (int c = 0; c < 300; ++c) {
    std::vector<std::pair<RobotId, double>> offers;
    std::vector<std::pair<RobotId, Belief>> bel;
    for (RobotId r = 0; r < 6; ++r) {
      offers.emplace_back(r, static_cast<double>(rng.below(5)));
      bel.emplace_back(r, belief_from(r, {static_cast<double>(rng.below(5))}));
    }
    const std::map<RobotId, double> o1(offers.begin(), offers.end());
    const std::map<RobotId, Belief> b1(bel.begin(), bel.end());
    std::shuffle(offers.begin(), offers.end(), std::mt19937_64(rng.next()));
    std::shuffle(bel.begin(), bel.end(), std::mt19937_64(rng.next()));
    std::map<RobotId, double> o2;
    std::map<RobotId, Belief> b2;
    for (auto& [k, v] : offers) o2.emplace(k, v);
    for (auto& [k, v] : bel) b2.emplace(k, v);
    const RobotId w = adjudicate(o1, b1);
    EXPECT_EQ(w, adjudicate(o2, b2));
    for (const auto& [r, off] : o1)
      EXPECT_LE(std::abs(o1.at(w) - b1.at(w).mean), std::abs(off - b1.at(r).mean));
  }
}

TEST(RankOffers, KnownFirstThenUnknown) {
  const std::map<RobotId, Belief> beliefs{{1, belief_from(1, {5.0})}, {2, belief_from(2, {10.0})}};
  const auto r = rank_offers({{0, 1.0}, {1, 7.0}, {2, 8.0}, {3, 0.0}}, beliefs);
  EXPECT_EQ(r, (std::vector<RobotId>{1, 2, 0, 3}));
}

TEST(Select, AllIsEveryoneElse) {
  Rng rng(1);
  EXPECT_EQ(select_partners({StrategyKind::All}, {}, 2, {0, 1, 2, 3}, rng),
            (std::set<RobotId>{0, 1, 3}));
}

TEST(Select, Central) {
  Rng rng(1);
  TradingStrategy s{StrategyKind::Central, 0.0, 1};
  EXPECT_EQ(select_partners(s, {}, 3, {0, 1, 2, 3}, rng), (std::set<RobotId>{1}));
  EXPECT_EQ(select_partners(s, {}, 1, {0, 1, 2, 3}, rng), (std::set<RobotId>{0, 2, 3}));
}

TEST(Select, ForcedInitialisationInIdOrder) {
  Rng rng(1);
  std::map<RobotId, Belief> beliefs;
  const std::set<RobotId> team{0, 1, 2, 3};
  for (RobotId expect : {0u, 1u, 3u}) {
    const auto sel = select_partners_detailed({StrategyKind::BanditExploit}, beliefs, 2, team, rng);
    EXPECT_EQ(sel.mode, SelectionMode::Forced);
    EXPECT_EQ(sel.partners, (std::set<RobotId>{expect}));
    beliefs[expect] = belief_from(expect, {1.0});
  }
  EXPECT_EQ(select_partners_detailed({StrategyKind::BanditExploit}, beliefs, 2, team, rng).mode,
            SelectionMode::Exploit);
}

TEST(Select, ExploitTakesArgmax) {
  Rng rng(1);
  const std::map<RobotId, Belief> beliefs{
      {0, belief_from(0, {3.0})}, {1, belief_from(1, {9.0})}, {3, belief_from(3, {4.0})}};
  for (int i = 0; i < 20; ++i)
    EXPECT_EQ(select_partners({StrategyKind::BanditExploit}, beliefs, 2, {0, 1, 2, 3}, rng),
              (std::set<RobotId>{1}));
}

TEST(Select, ExploreExploitFrequency) {
  Rng rng(77);
  const std::map<RobotId, Belief> beliefs{{0, belief_from(0, {3.0})}, {1, belief_from(1, {9.0})}};
  TradingStrategy s{StrategyKind::BanditExploreExploit, 0.3, 0};
  const int n = 100000;
  int exploits = 0;
  for (int i = 0; i < n; ++i)
    if (select_partners_detailed(s, beliefs, 2, {0, 1, 2}, rng).mode == SelectionMode::Exploit) ++exploits;
  EXPECT_NEAR(static_cast<double>(exploits) / n, 0.3, 0.01);
}

TEST(Select, NeverSelfNeverEmpty) {
  Rng rng(3);
  for (int c = 0; c < 2000; ++c) {
    std::set<RobotId> team;
    const auto size = 2 + rng.below(5);
    for (RobotId r = 0; r < size; ++r) team.insert(r);
    const RobotId self = static_cast<RobotId>(rng.below(size));
    std::map<RobotId, Belief> beliefs;
    for (RobotId r : team)
      if (rng.uniform() < 0.7) beliefs[r] = belief_from(r, {rng.uniform()});
    TradingStrategy s{static_cast<StrategyKind>(rng.below(5)), rng.uniform(),
                      static_cast<RobotId>(rng.below(size))};
    const auto p = select_partners(s, beliefs, self, team, rng);
    EXPECT_FALSE(p.empty());
    EXPECT_EQ(p.count(self), 0u);
    for (RobotId r : p) EXPECT_TRUE(team.count(r));
  }
}

TEST(Select, LoneRobotRejected) {
  Rng rng(1);
  EXPECT_THROW(select_partners({StrategyKind::All}, {}, 0, {0}, rng), Error);
}

TEST(Strategy, Validation) {
  EXPECT_THROW((TradingStrategy{StrategyKind::BanditExploreExploit, 1.5, 0}.validate()), Error);
  EXPECT_NO_THROW((TradingStrategy{StrategyKind::BanditExploreExploit, 0.5, 0}.validate()));
  EXPECT_EQ(parse_strategy_kind("CENTRAL"), StrategyKind::Central);
  EXPECT_FALSE(parse_strategy_kind("central").has_value());
}
