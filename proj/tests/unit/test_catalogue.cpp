#include <gtest/gtest.h>

#include <sstream>

#include "expmarket/catalogue.hpp"
#include "helpers.hpp"

using namespace expmarket;
using namespace testutil;

namespace {

Catalogue uniform_catalogue(std::size_t n, double metres, bool cyclic) {
  Catalogue c;
  for (std::size_t i = 0; i < n; ++i) c.sections.push_back({"S" + std::to_string(i), "street", 1, metres});
  c.cyclic = cyclic;
  return c;
}

ProductIndex pi(std::uint32_t v) { return ProductIndex{v}; }

std::set<ProductIndex> pis(std::initializer_list<std::uint32_t> vs) {
  std::set<ProductIndex> out;
  for (auto v : vs) out.insert(pi(v));
  return out;
}

Patch patch_of(std::initializer_list<std::pair<std::uint64_t, std::uint32_t>> nodes) {
  Graph g;
  for (auto [id, prod] : nodes) {
    Node n = make_node(id);
    n.product = pi(prod);
    g.insert_node(n);
  }
  return make_patch(Graph{}, g);
}

Belief belief_of(RobotId r, double mean) {
  return update_belief(Belief{r}, Measurement{r, 0, mean, {}});
}

}  // namespace

TEST(ProductOf, SectionBoundaries) {
  const auto c = uniform_catalogue(3, 10.0, false);
  EXPECT_EQ(product_of(0.0, c), pi(0));
  EXPECT_EQ(product_of(9.999, c), pi(0));
  EXPECT_EQ(product_of(10.0, c), pi(1));
  EXPECT_EQ(product_of(29.9, c), pi(2));
}

TEST(ProductOf, OutOfWorld) {
  const auto c = uniform_catalogue(3, 10.0, false);
  for (double x : {-0.1, 30.0, 1e9}) {
    try {
      product_of(x, c);
      FAIL() << x;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::OutOfWorld);
    }
  }
}

TEST(ProductOf, EveryPositionInExactlyOneSection) {
  Rng rng(4);
  Catalogue c;
  for (int i = 0; i < 12; ++i) c.sections.push_back({"s", "x", 1, rng.uniform(1.0, 50.0)});
  for (int k = 0; k < 5000; ++k) {
    const double x = rng.uniform(0.0, c.length());
    const auto p = product_of(x, c).value;
    EXPECT_LE(c.start_of(p), x);
    EXPECT_LT(x, c.start_of(p) + c.sections[p].metres);
  }
}

TEST(Shopping, WindowInterior) {
  const auto c = uniform_catalogue(10, 1.0, false);
  EXPECT_EQ(shopping_list({ShoppingKind::Window, 1}, pi(3), c), pis({2, 3, 4}));
}

TEST(Shopping, WindowClampsWithoutWrap) {
  const auto c = uniform_catalogue(10, 1.0, false);
  EXPECT_EQ(shopping_list({ShoppingKind::Window, 1}, pi(0), c), pis({0, 1}));
  EXPECT_EQ(shopping_list({ShoppingKind::Window, 2}, pi(9), c), pis({7, 8, 9}));
}

TEST(Shopping, WindowWrapsOnCycle) {
  const auto c = uniform_catalogue(10, 1.0, true);
  EXPECT_EQ(shopping_list({ShoppingKind::Window, 1}, pi(0), c), pis({9, 0, 1}));
  EXPECT_EQ(shopping_list({ShoppingKind::Window, 7}, pi(0), c).size(), 10u);
}

TEST(Shopping, CurrentIsSingleton) {
  const auto c = uniform_catalogue(10, 1.0, true);
  EXPECT_EQ(shopping_list({ShoppingKind::Current, 4}, pi(6), c), pis({6}));
}

TEST(Shopping, RecommendAddsAdvisedProduct) {
  const auto c = uniform_catalogue(10, 1.0, false);
  Advisories adv;
  adv.favourite_seller[pi(3)] = 7;
  adv.best_selling[7] = pi(8);
  EXPECT_EQ(shopping_list({ShoppingKind::Recommend, 1}, pi(3), c, adv), pis({2, 3, 4, 8}));
  EXPECT_EQ(shopping_list({ShoppingKind::Recommend, 1}, pi(5), c, adv), pis({4, 5, 6}));
}

TEST(Shopping, WindowSubsetOfRecommend) {
  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    const auto n = 1 + rng.below(15);
    const auto c = uniform_catalogue(n, 1.0, rng.uniform() < 0.5);
    const auto cur = pi(static_cast<std::uint32_t>(rng.below(n)));
    const auto r = static_cast<std::uint32_t>(1 + rng.below(4));
    Advisories adv;
    for (int j = 0; j < 3; ++j) {
      adv.favourite_seller[pi(static_cast<std::uint32_t>(rng.below(n)))] = static_cast<RobotId>(rng.below(4));
      adv.best_selling[static_cast<RobotId>(rng.below(4))] = pi(static_cast<std::uint32_t>(rng.below(n)));
    }
    const auto w = shopping_list({ShoppingKind::Window, r}, cur, c, adv);
    const auto rec = shopping_list({ShoppingKind::Recommend, r}, cur, c, adv);
    EXPECT_TRUE(w.count(cur));
    EXPECT_LE(w.size(), 2u * r + 1u);
    for (auto p : w) EXPECT_TRUE(rec.count(p));
    EXPECT_LE(rec.size(), w.size() + 1);
  }
}

TEST(Shopping, RadiusValidation) {
  EXPECT_THROW((ShoppingStrategy{ShoppingKind::Window, 0}.validate()), Error);
  EXPECT_NO_THROW((ShoppingStrategy{ShoppingKind::Current, 0}.validate()));
  EXPECT_EQ(parse_shopping_kind("RECOMMEND"), ShoppingKind::Recommend);
  EXPECT_FALSE(parse_shopping_kind("window").has_value());
}

TEST(Ledger, BoughtNodesAreNeverSold) {
  ProductLedger l;
  l = record_trade(l, patch_of({{1, 0}, {2, 1}}), TradeDirection::Bought);
  l = record_trade(l, patch_of({{2, 1}, {3, 1}, {4, 2}}), TradeDirection::Sold);
  EXPECT_EQ(l.purchases[pi(0)], (std::set<NodeId>{nid(1)}));
  EXPECT_EQ(l.purchases[pi(1)], (std::set<NodeId>{nid(2)}));
  EXPECT_EQ(l.sales[pi(1)], (std::set<NodeId>{nid(3)}));
  EXPECT_EQ(l.sales[pi(2)], (std::set<NodeId>{nid(4)}));
  EXPECT_TRUE(l.wares[pi(1)].count(nid(2)));
  EXPECT_TRUE(l.purchased(nid(1)));
  EXPECT_FALSE(l.purchased(nid(3)));
}

TEST(Ledger, SalesCountDistinctNodes) {
  ProductLedger l;
  l = record_trade(l, patch_of({{5, 3}}), TradeDirection::Sold);
  l = record_trade(l, patch_of({{5, 3}}), TradeDirection::Sold);
  EXPECT_EQ(l.sales[pi(3)].size(), 1u);
}

TEST(Ledger, WaresPartitionTheMap) {
  Rng rng(12);
  NodeIdGenerator ids(1, 0);
  for (int k = 0; k < 50; ++k) {
    const Graph g = random_graph(rng, ids, 1 + rng.below(30), 10, 4);
    ProductLedger l;
    l.sync_wares(g);
    std::size_t total = 0;
    std::set<NodeId> seen;
    for (const auto& [p, set] : l.wares) {
      for (const auto& id : set) {
        EXPECT_EQ(g.node(id).product, p);
        EXPECT_TRUE(seen.insert(id).second);
      }
      total += set.size();
    }
    EXPECT_EQ(total, g.node_count());
  }
}

TEST(Advertise, MostSalesTiesToSmallest) {
  ProductLedger l;
  EXPECT_FALSE(advertise(l).has_value());
  l.sales[pi(4)] = {nid(1), nid(2)};
  l.sales[pi(0)] = {nid(3), nid(5)};
  l.sales[pi(2)] = {nid(6)};
  EXPECT_EQ(advertise(l), pi(0));
  l.sales[pi(2)].insert({nid(7), nid(8)});
  EXPECT_EQ(advertise(l), pi(2));
}

TEST(Advise, HighestMeanTiesToSmallerId) {
  ProductBeliefs b;
  EXPECT_FALSE(advise(b, pi(0)).has_value());
  b[pi(0)][3] = belief_of(3, 4.0);
  b[pi(0)][1] = belief_of(1, 4.0);
  b[pi(0)][2] = belief_of(2, 1.0);
  EXPECT_EQ(advise(b, pi(0)), 1u);
  b[pi(0)][5] = belief_of(5, 9.0);
  EXPECT_EQ(advise(b, pi(0)), 5u);
  b[pi(1)][0] = Belief{0};
  EXPECT_FALSE(advise(b, pi(1)).has_value());
}

TEST(BeliefFor, FallsBackToSeller) {
  ProductBeliefs pb;
  pb[pi(2)][1] = belief_of(1, 8.0);
  const std::map<RobotId, Belief> ps{{1, belief_of(1, 3.0)}};
  EXPECT_DOUBLE_EQ(belief_for(pb, ps, 1, pi(2)).mean, 8.0);
  EXPECT_DOUBLE_EQ(belief_for(pb, ps, 1, pi(4)).mean, 3.0);
}

TEST(Parse, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_catalogue(in, "mem");
  };
  EXPECT_THROW(parse(""), Error);
  EXPECT_THROW(parse("A,b,1\n"), Error);
  EXPECT_THROW(parse("A,b,x,10\n"), Error);
  EXPECT_THROW(parse("A,b,0,10\n"), Error);
  EXPECT_THROW(parse("A,b,2,-1\n"), Error);
  try {
    parse("name,category,stock_items,metres\nA,b,1,2\nB,c,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_NE(std::string(e.what()).find("mem:3"), std::string::npos);
  }
  const auto c = parse("# comment\n\nA , b , 3 , 2.5\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.sections[0].name, "A");
  EXPECT_EQ(c.sections[0].stock_items, 3u);
  EXPECT_DOUBLE_EQ(c.length(), 2.5);
}

TEST(Parse, MissingFile) {
  EXPECT_THROW(load_catalogue("/nonexistent/catalogue.csv"), Error);
}

TEST(Parse, ShippedTable) {
  const auto c = load_catalogue(std::string(EXPMARKET_SOURCE_DIR) + "/data/table1.csv");
  ASSERT_EQ(c.size(), 9u);
  EXPECT_EQ(c.sections[0].name, "ST-ANNES");
  EXPECT_EQ(c.sections[0].category, "college");
  EXPECT_EQ(c.sections[0].stock_items, 12u);
  EXPECT_DOUBLE_EQ(c.sections[0].metres, 143.0);
  EXPECT_EQ(product_of(143.0, c), pi(1));
}
