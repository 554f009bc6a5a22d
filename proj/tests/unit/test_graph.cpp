#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "expmarket/experience.hpp"
#include "helpers.hpp"

using namespace expmarket;
using namespace testutil;

namespace {

// All-pairs hop distances over undirected adjacency, by repeated relaxation.
std::map<NodeId, std::size_t> hop_distances(const Graph& g, const NodeId& seed) {
  std::map<NodeId, std::size_t> dist;
  dist[seed] = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& e : g.edges()) {
      for (auto [a, b] : {std::pair{e.src, e.dst}, std::pair{e.dst, e.src}}) {
        auto it = dist.find(a);
        if (it == dist.end()) continue;
        auto jt = dist.find(b);
        if (jt == dist.end() || jt->second > it->second + 1) {
          dist[b] = it->second + 1;
          changed = true;
        }
      }
    }
  }
  return dist;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

Observation obs_at(std::vector<double> d, double travelled) {
  Observation o;
  o.descriptor = std::move(d);
  o.travelled = travelled;
  return o;
}

}  // namespace

TEST(Neighbourhood, OneHopOnChain) {
  Graph g;
  for (int i = 1; i <= 3; ++i) g.insert_node(make_node(i));
  g.insert_edge(Edge{nid(1), nid(2), {}});
  g.insert_edge(Edge{nid(2), nid(3), {}});
  EXPECT_EQ(neighbourhood(g, nid(1), 1), (std::set<NodeId>{nid(1), nid(2)}));
  EXPECT_EQ(neighbourhood(g, nid(3), 1), (std::set<NodeId>{nid(2), nid(3)}));
}

TEST(Neighbourhood, DepthZeroIsSeed) {
  Rng rng(1);
  NodeIdGenerator ids(1, 0);
  const Graph g = random_graph(rng, ids, 10, 20);
  const NodeId s = g.nodes().begin()->first;
  EXPECT_EQ(neighbourhood(g, s, 0), std::set<NodeId>{s});
}

TEST(Neighbourhood, UnknownSeed) {
  try {
    neighbourhood(Graph{}, nid(1), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownNode);
  }
}

TEST(Neighbourhood, MatchesHopDistanceOracle) {
  Rng rng(2);
  NodeIdGenerator ids(2, 0);
  for (int c = 0; c < 200; ++c) {
    const Graph g = random_graph(rng, ids, 1 + rng.below(15), rng.below(25));
    const auto seeds = node_ids(g);
    const NodeId s = seeds[rng.below(seeds.size())];
    const auto depth = rng.below(5);
    const auto dist = hop_distances(g, s);
    std::set<NodeId> expected;
    for (const auto& [id, d] : dist)
      if (d <= depth) expected.insert(id);
    ASSERT_EQ(neighbourhood(g, s, depth), expected);
  }
}

TEST(Components, Simple) {
  Graph g;
  for (int i = 1; i <= 3; ++i) g.insert_node(make_node(i));
  g.insert_edge(Edge{nid(1), nid(2), {}});
  const auto parts = connected_components(g);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts[0], (std::vector<NodeId>{nid(1), nid(2)}));
  EXPECT_EQ(parts[1], (std::vector<NodeId>{nid(3)}));
  EXPECT_TRUE(connected_components(Graph{}).empty());
}

TEST(Components, AgreesWithUnionFind) {
  Rng rng(3);
  NodeIdGenerator ids(3, 0);
  for (int c = 0; c < 200; ++c) {
    const Graph g = random_graph(rng, ids, rng.below(20), rng.below(20));
    const auto order = node_ids(g);
    std::map<NodeId, std::size_t> index;
    for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = i;
    UnionFind uf(order.size());
    for (const auto& e : g.edges()) uf.unite(index[e.src], index[e.dst]);
    std::map<std::size_t, std::set<NodeId>> expect;
    for (std::size_t i = 0; i < order.size(); ++i) expect[uf.find(i)].insert(order[i]);
    std::set<std::set<NodeId>> want, got;
    for (const auto& [root, members] : expect) want.insert(members);
    for (const auto& part : connected_components(g)) got.insert({part.begin(), part.end()});
    ASSERT_EQ(got, want);
  }
}

TEST(GraphInvariants, NoDanglingEdgesAfterRandomEdits) {
  Rng rng(4);
  NodeIdGenerator ids(4, 0);
  Graph g;
  for (int i = 0; i < 200; ++i) {
    g = random_edit(g, rng, ids);
    for (const auto& e : g.edges()) {
      ASSERT_TRUE(g.contains(e.src));
      ASSERT_TRUE(g.contains(e.dst));
      ASSERT_NE(e.src, e.dst);
      ASSERT_TRUE(g.in_edges(e.dst).count(e.src));
    }
  }
}

TEST(GraphInvariants, EraseWithInEdgesRejected) {
  Graph g;
  g.insert_node(make_node(1));
  g.insert_node(make_node(2));
  g.insert_edge(Edge{nid(1), nid(2), {}});
  try {
    g.erase_node(nid(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DanglingEdge);
  }
  g.erase_node(nid(1));
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(GraphInvariants, DuplicateEdgeAndSelfLoopRejected) {
  Graph g;
  g.insert_node(make_node(1));
  g.insert_node(make_node(2));
  g.insert_edge(Edge{nid(1), nid(2), {}});
  EXPECT_THROW(g.insert_edge(Edge{nid(1), nid(2), {}}), Error);
  EXPECT_THROW(g.insert_edge(Edge{nid(1), nid(1), {}}), Error);
}

TEST(ExportText, OneLinePerRecord) {
  Graph g;
  g.insert_node(make_node(1, {0.5, 1.0}));
  g.insert_node(make_node(2, {2.0}));
  g.insert_edge(Edge{nid(1), nid(2), Pose::from_translation(5.0)});
  std::ostringstream os;
  export_text(os, g);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_NE(text.find("node\t" + nid(1).str() + "\t0\t0\t0\t0\t0\t0\t0.5,1\n"), std::string::npos);
  EXPECT_NE(text.find("edge\t" + nid(1).str() + "\t" + nid(2).str() + "\t5\t0\t0\t1\t0\t0\t0\n"),
            std::string::npos);
}

TEST(NodeIds, UniqueAcrossRobotsAndOrdered) {
  std::set<NodeId> seen;
  for (RobotId r = 0; r < 4; ++r) {
    NodeIdGenerator ids(42, r);
    for (int i = 0; i < 1000; ++i) ASSERT_TRUE(seen.insert(ids.next()).second);
  }
  const NodeId a = NodeId::from_words(0, 1), b = NodeId::from_words(1, 0);
  EXPECT_LT(a, b);
  EXPECT_EQ(NodeId::parse(b.str()), b);
}

TEST(RecordForay, EmptyBaseChainsEveryObservation) {
  NodeIdGenerator ids(7, 0);
  std::vector<Observation> obs{obs_at({0.0}, 0.0), obs_at({1.0}, 5.0), obs_at({2.0}, 5.0)};
  const Patch p = record_foray_patch(Graph{}, obs, 0, 1, LocaliserConfig{}, ids);
  EXPECT_EQ(p.insert_count(), 3u);
  const Graph g = apply_patch(Graph{}, p);
  ASSERT_EQ(g.edge_count(), 2u);
  for (const auto& e : g.edges()) EXPECT_EQ(e.pose.translation[0], 5.0);
}

TEST(RecordForay, FullyExplainedGivesEmptyPatch) {
  Graph base;
  base.insert_node(make_node(1, {0.0}));
  base.insert_node(make_node(2, {1.0}));
  NodeIdGenerator ids(7, 0);
  std::vector<Observation> obs{obs_at({0.0}, 0.0), obs_at({1.0}, 5.0)};
  EXPECT_TRUE(record_foray_patch(base, obs, 0, 1, LocaliserConfig{}, ids).empty());
}

TEST(RecordForay, MiddleExplainedInsertsOthers) {
  Graph base;
  base.insert_node(make_node(1, {10.0}));
  NodeIdGenerator ids(7, 0);
  std::vector<Observation> obs{obs_at({0.0}, 0.0), obs_at({10.0}, 5.0), obs_at({20.0}, 5.0)};
  const LocaliserConfig cfg;
  const auto loc = localise_observations(base, obs, cfg);
  std::size_t failures = 0;
  for (const auto& l : loc) failures += !l.ok();
  const Patch p = record_foray_patch(base, obs, 0, 1, cfg, ids);
  EXPECT_EQ(p.insert_count(), failures);
  ASSERT_EQ(p.insert_count(), 2u);
  std::vector<double> firsts;
  for (const Node* n : p.inserted_nodes()) firsts.push_back(n->descriptor[0]);
  std::sort(firsts.begin(), firsts.end());
  EXPECT_EQ(firsts, (std::vector<double>{0.0, 20.0}));
  const Graph g = apply_patch(base, p);
  EXPECT_EQ(connected_components(g).size(), 1u);
}

TEST(RecordForay, ProductLabelsCarried) {
  NodeIdGenerator ids(7, 0);
  std::vector<Observation> obs{obs_at({0.0}, 0.0), obs_at({5.0}, 5.0)};
  obs[0].product = ProductIndex{3};
  obs[1].product = ProductIndex{4};
  const Patch p = record_foray_patch(Graph{}, obs, 2, 9, LocaliserConfig{}, ids);
  std::set<std::uint32_t> products;
  for (const Node* n : p.inserted_nodes()) {
    products.insert(n->product.value);
    EXPECT_EQ(n->creator, 2u);
    EXPECT_EQ(n->foray, 9u);
  }
  EXPECT_EQ(products, (std::set<std::uint32_t>{3, 4}));
}
