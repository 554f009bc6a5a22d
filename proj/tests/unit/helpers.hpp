#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "expmarket/repository.hpp"

namespace testutil {

using namespace expmarket;

inline NodeId nid(std::uint64_t i) { return NodeId::from_words(0, i); }

inline Node make_node(std::uint64_t i, std::vector<double> desc = {0.0}, std::uint64_t inliers = 0) {
  Node n;
  n.id = nid(i);
  n.descriptor = std::move(desc);
  n.inlier_count = inliers;
  return n;
}

inline std::vector<double> random_desc(Rng& rng, std::size_t dim) {
  std::vector<double> d(dim);
  for (auto& x : d) x = rng.uniform();
  return d;
}

inline Pose random_pose(Rng& rng) {
  Pose p;
  p.translation = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-1, 1)};
  p.rotation = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
  return p.canonical();
}

inline Node random_node(Rng& rng, NodeIdGenerator& ids, std::size_t dim = 4) {
  Node n;
  n.id = ids.next();
  n.descriptor = random_desc(rng, dim);
  n.inlier_count = rng.below(100);
  n.fabmap_score = rng.uniform();
  n.product = ProductIndex{static_cast<std::uint32_t>(rng.below(5))};
  n.creator = ids.robot();
  return n;
}

/// Adds an edge between two random distinct nodes when that pair is free.
inline void add_random_edge(Graph& g, Rng& rng) {
  if (g.node_count() < 2) return;
  auto pick = [&] {
    auto it = g.nodes().begin();
    std::advance(it, static_cast<std::ptrdiff_t>(rng.below(g.node_count())));
    return it->first;
  };
  const NodeId a = pick(), b = pick();
  if (a == b || g.edge(a, b)) return;
  g.insert_edge(Edge{a, b, random_pose(rng)});
}

inline Graph random_graph(Rng& rng, NodeIdGenerator& ids, std::size_t nodes, std::size_t edges,
                          std::size_t dim = 4) {
  Graph g;
  for (std::size_t i = 0; i < nodes; ++i) g.insert_node(random_node(rng, ids, dim));
  for (std::size_t i = 0; i < edges; ++i) add_random_edge(g, rng);
  return g;
}

/// A random edit of `g`: deletes some nodes and edges, adds nodes and edges.
inline Graph random_edit(const Graph& g, Rng& rng, NodeIdGenerator& ids) {
  Graph h = g;
  {
    auto ed = h.edit();
    std::vector<NodeId> ids_now;
    for (const auto& [id, n] : g.nodes()) ids_now.push_back(id);
    for (const auto& id : ids_now)
      if (rng.uniform() < 0.2) ed.detach_and_erase(id);
    for (const auto& e : h.edges())
      if (rng.uniform() < 0.15) ed.erase_edge(e.src, e.dst);
    const auto inserts = rng.below(6);
    for (std::uint64_t i = 0; i < inserts; ++i) ed.insert_node(random_node(rng, ids));
  }
  const auto extra = rng.below(6);
  for (std::uint64_t i = 0; i < extra; ++i) add_random_edge(h, rng);
  return h;
}

inline Patch random_patch(const Graph& g, Rng& rng, NodeIdGenerator& ids) {
  return make_patch(g, random_edit(g, rng, ids));
}

/// Node-id set of a graph.
inline std::vector<NodeId> node_ids(const Graph& g) {
  std::vector<NodeId> out;
  for (const auto& [id, n] : g.nodes()) out.push_back(id);
  return out;
}

}  // namespace testutil
