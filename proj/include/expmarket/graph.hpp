#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "expmarket/core.hpp"
#include "expmarket/digest.hpp"
#include "expmarket/node_id.hpp"
#include "expmarket/pose.hpp"
#include "expmarket/serialization.hpp"

namespace expmarket {

/// A place in the experience map.
///
/// `path_memory` is a local annotation (how often this agent localised
/// against the node). It travels with the node when the node is traded but is
/// not part of the node's identity: it is excluded from state digests and
/// from content comparison, so localising never changes repository state.
struct Node {
  NodeId id;
  std::vector<double> descriptor;
  std::uint64_t inlier_count = 0;
  double fabmap_score = 0.0;
  std::uint64_t path_memory = 0;
  ProductIndex product;
  RobotId creator = 0;
  std::uint32_t foray = 0;
};

inline bool same_content(const Node& a, const Node& b) {
  return a.id == b.id && a.descriptor == b.descriptor && a.inlier_count == b.inlier_count &&
         a.fabmap_score == b.fabmap_score && a.product == b.product && a.creator == b.creator &&
         a.foray == b.foray;
}

struct Edge {
  NodeId src;
  NodeId dst;
  Pose pose;

  friend bool operator==(const Edge&, const Edge&) = default;
};

inline void encode_node_id(ByteWriter& w, const NodeId& id) { w.bytes(id.bytes); }

inline NodeId decode_node_id(ByteReader& r) {
  NodeId id;
  r.bytes(id.bytes);
  return id;
}

// Content fields only: id, dim, descriptor, inliers, fabmap, product, creator, foray.
inline void encode_node_content(ByteWriter& w, const Node& n) {
  encode_node_id(w, n.id);
  w.u32(static_cast<std::uint32_t>(n.descriptor.size()));
  for (double d : n.descriptor) w.f64(d);
  w.u64(n.inlier_count);
  w.f64(n.fabmap_score);
  w.u32(n.product.value);
  w.u32(n.creator);
  w.u32(n.foray);
}

inline void encode_node(ByteWriter& w, const Node& n) {
  encode_node_content(w, n);
  w.u64(n.path_memory);
}

inline Node decode_node(ByteReader& r) {
  Node n;
  n.id = decode_node_id(r);
  n.descriptor.resize(r.u32());
  for (auto& d : n.descriptor) d = r.f64();
  n.inlier_count = r.u64();
  n.fabmap_score = r.f64();
  n.product.value = r.u32();
  n.creator = r.u32();
  n.foray = r.u32();
  n.path_memory = r.u64();
  return n;
}

inline void encode_pose(ByteWriter& w, const Pose& p) {
  const Pose c = p.canonical();
  for (double t : c.translation) w.f64(t);
  for (double q : c.rotation) w.f64(q);
}

inline Pose decode_pose(ByteReader& r) {
  Pose p;
  for (auto& t : p.translation) t = r.f64();
  for (auto& q : p.rotation) q = r.f64();
  return p;
}

inline void encode_edge(ByteWriter& w, const Edge& e) {
  encode_node_id(w, e.src);
  encode_node_id(w, e.dst);
  encode_pose(w, e.pose);
}

inline Edge decode_edge(ByteReader& r) {
  Edge e;
  e.src = decode_node_id(r);
  e.dst = decode_node_id(r);
  e.pose = decode_pose(r);
  return e;
}

inline Hash256 node_item_hash(const Node& n) {
  ByteWriter w;
  w.u8('N');
  encode_node_content(w, n);
  return sha256(w.data());
}

inline Hash256 edge_item_hash(const Edge& e) {
  ByteWriter w;
  w.u8('E');
  encode_edge(w, e);
  return sha256(w.data());
}

/// Topometric experience map: id-keyed nodes, directed out-edges with 6DoF
/// relative poses, and a reverse (in-edge) index.
///
/// The state digest is maintained eagerly: every Editor scope recomputes it on
/// exit, so const access (including digest()) is safe from several readers.
class Graph {
 public:
  class Editor;

  Graph() : digest_(StateDigest::empty_state()) {}

  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  bool empty() const { return nodes_.empty(); }
  bool contains(const NodeId& id) const { return nodes_.count(id) != 0; }

  const Node& node(const NodeId& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, id.str());
    return it->second;
  }

  const std::map<NodeId, Pose>& out_edges(const NodeId& id) const {
    auto it = out_.find(id);
    if (it == out_.end()) throw Error(Errc::UnknownNode, id.str());
    return it->second;
  }

  const std::set<NodeId>& in_edges(const NodeId& id) const {
    auto it = in_.find(id);
    if (it == in_.end()) throw Error(Errc::UnknownNode, id.str());
    return it->second;
  }

  std::optional<Pose> edge(const NodeId& src, const NodeId& dst) const {
    auto it = out_.find(src);
    if (it == out_.end()) return std::nullopt;
    auto e = it->second.find(dst);
    if (e == it->second.end()) return std::nullopt;
    return e->second;
  }

  /// All edges sorted by (src, dst).
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (const auto& [src, dsts] : out_)
      for (const auto& [dst, pose] : dsts) out.push_back(Edge{src, dst, pose});
    return out;
  }

  const StateDigest& digest() const { return digest_; }

  /// Digest rebuilt from scratch, independent of the maintained item set.
  StateDigest recompute_digest() const {
    std::vector<Hash256> items;
    for (const auto& [id, n] : nodes_) items.push_back(node_item_hash(n));
    for (const auto& e : edges()) items.push_back(edge_item_hash(e));
    std::sort(items.begin(), items.end());
    ByteWriter w;
    for (const auto& h : items) w.bytes(h);
    return StateDigest{sha256(w.data())};
  }

  Editor edit();

  void insert_node(Node n);
  void erase_node(const NodeId& id);
  void insert_edge(const Edge& e);
  void erase_edge(const NodeId& src, const NodeId& dst);

  /// Bump path memory. Does not change the state digest.
  void touch(const NodeId& id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, id.str());
    ++it->second.path_memory;
  }

 private:
  void refresh_digest() {
    ByteWriter w;
    for (const auto& h : items_) w.bytes(h);
    digest_ = StateDigest{sha256(w.data())};
  }

  void erase_item(const Hash256& h) {
    auto it = items_.find(h);
    if (it != items_.end()) items_.erase(it);
  }

  std::map<NodeId, Node> nodes_;
  std::map<NodeId, std::map<NodeId, Pose>> out_;
  std::map<NodeId, std::set<NodeId>> in_;
  std::multiset<Hash256> items_;
  std::size_t edge_count_ = 0;
  StateDigest digest_;
};

/// Scoped batch of mutations; the digest is refreshed once when it closes.
class Graph::Editor {
 public:
  explicit Editor(Graph& g) : g_(g) {}
  Editor(const Editor&) = delete;
  Editor& operator=(const Editor&) = delete;
  ~Editor() {
    for (const auto& id : dirty_) g_.items_.insert(node_item_hash(g_.nodes_.at(id)));
    g_.refresh_digest();
  }

  void insert_node(Node n) {
    if (g_.contains(n.id)) throw Error(Errc::PatchConflict, "node exists: " + n.id.str());
    const NodeId id = n.id;
    g_.items_.insert(node_item_hash(n));
    g_.nodes_.emplace(id, std::move(n));
    g_.out_[id];
    g_.in_[id];
  }

  /// Removes a node together with its out-edges. In-edges from other nodes
  /// must already be gone.
  void erase_node(const NodeId& id) {
    auto it = g_.nodes_.find(id);
    if (it == g_.nodes_.end()) throw Error(Errc::MissingTarget, "no node " + id.str());
    for (const auto& src : g_.in_.at(id)) {
      if (src != id) {
        throw Error(Errc::DanglingEdge,
                    "erasing " + id.str() + " would orphan edge from " + src.str());
      }
    }
    auto outs = g_.out_.at(id);
    for (const auto& [dst, pose] : outs) erase_edge(id, dst);
    if (!dirty_.erase(id)) g_.erase_item(node_item_hash(it->second));
    g_.nodes_.erase(it);
    g_.out_.erase(id);
    g_.in_.erase(id);
  }

  void insert_edge(const Edge& e) {
    if (e.src == e.dst) throw Error(Errc::PatchConflict, "self-loop on " + e.src.str());
    if (!g_.contains(e.src) || !g_.contains(e.dst)) {
      throw Error(Errc::DanglingEdge, "edge " + e.src.str() + " -> " + e.dst.str());
    }
    auto& outs = g_.out_.at(e.src);
    if (outs.count(e.dst)) {
      throw Error(Errc::PatchConflict, "edge exists " + e.src.str() + " -> " + e.dst.str());
    }
    const Pose pose = e.pose.canonical();
    outs.emplace(e.dst, pose);
    g_.in_.at(e.dst).insert(e.src);
    g_.items_.insert(edge_item_hash(Edge{e.src, e.dst, pose}));
    ++g_.edge_count_;
  }

  void erase_edge(const NodeId& src, const NodeId& dst) {
    auto it = g_.out_.find(src);
    if (it == g_.out_.end() || !it->second.count(dst)) {
      throw Error(Errc::MissingTarget, "no edge " + src.str() + " -> " + dst.str());
    }
    g_.erase_item(edge_item_hash(Edge{src, dst, it->second.at(dst)}));
    it->second.erase(dst);
    g_.in_.at(dst).erase(src);
    --g_.edge_count_;
  }

  /// Removes a node and every edge touching it.
  void detach_and_erase(const NodeId& id) {
    const auto ins = g_.in_edges(id);
    for (const auto& src : ins) erase_edge(src, id);
    erase_node(id);
  }

  /// Content edits through the returned reference are rehashed when the
  /// editor closes.
  Node& mutable_node(const NodeId& id) {
    auto it = g_.nodes_.find(id);
    if (it == g_.nodes_.end()) throw Error(Errc::UnknownNode, id.str());
    if (dirty_.insert(id).second) g_.erase_item(node_item_hash(it->second));
    return it->second;
  }

 private:
  Graph& g_;
  std::set<NodeId> dirty_;
};

inline Graph::Editor Graph::edit() { return Editor(*this); }
inline void Graph::insert_node(Node n) { edit().insert_node(std::move(n)); }
inline void Graph::erase_node(const NodeId& id) { edit().erase_node(id); }
inline void Graph::insert_edge(const Edge& e) { edit().insert_edge(e); }
inline void Graph::erase_edge(const NodeId& s, const NodeId& d) { edit().erase_edge(s, d); }

inline StateDigest state_digest(const Graph& g) { return g.digest(); }

/// Breadth-first ball of `depth` hops around `seed`, following edges in both
/// directions.
inline std::set<NodeId> neighbourhood(const Graph& g, const NodeId& seed, std::size_t depth) {
  if (!g.contains(seed)) throw Error(Errc::UnknownNode, seed.str());
  std::set<NodeId> seen{seed};
  std::vector<NodeId> frontier{seed};
  for (std::size_t hop = 0; hop < depth && !frontier.empty(); ++hop) {
    std::vector<NodeId> next;
    for (const auto& n : frontier) {
      for (const auto& [dst, pose] : g.out_edges(n))
        if (seen.insert(dst).second) next.push_back(dst);
      for (const auto& src : g.in_edges(n))
        if (seen.insert(src).second) next.push_back(src);
    }
    frontier = std::move(next);
  }
  return seen;
}

/// Weakly connected components, each sorted, ordered by smallest member.
inline std::vector<std::vector<NodeId>> connected_components(const Graph& g) {
  std::vector<std::vector<NodeId>> parts;
  std::set<NodeId> seen;
  for (const auto& [id, n] : g.nodes()) {
    if (seen.count(id)) continue;
    std::vector<NodeId> part;
    std::deque<NodeId> queue{id};
    seen.insert(id);
    while (!queue.empty()) {
      NodeId cur = queue.front();
      queue.pop_front();
      part.push_back(cur);
      for (const auto& [dst, pose] : g.out_edges(cur))
        if (seen.insert(dst).second) queue.push_back(dst);
      for (const auto& src : g.in_edges(cur))
        if (seen.insert(src).second) queue.push_back(src);
    }
    std::sort(part.begin(), part.end());
    parts.push_back(std::move(part));
  }
  return parts;
}

template <class Pred>
Graph induced_subgraph(const Graph& g, Pred&& keep) {
  Graph out;
  auto ed = out.edit();
  for (const auto& [id, n] : g.nodes())
    if (keep(n)) ed.insert_node(n);
  for (const auto& e : g.edges())
    if (out.contains(e.src) && out.contains(e.dst)) ed.insert_edge(e);
  return out;
}

// Canonical wire format: u32 node count, nodes by id, u32 edge count, edges by (src, dst).
inline void encode_graph(ByteWriter& w, const Graph& g) {
  w.u32(static_cast<std::uint32_t>(g.node_count()));
  for (const auto& [id, n] : g.nodes()) encode_node(w, n);
  const auto es = g.edges();
  w.u32(static_cast<std::uint32_t>(es.size()));
  for (const auto& e : es) encode_edge(w, e);
}

inline std::vector<std::uint8_t> serialize_graph(const Graph& g) {
  ByteWriter w;
  encode_graph(w, g);
  return w.take();
}

inline Graph decode_graph(ByteReader& r) {
  Graph g;
  auto ed = g.edit();
  const auto nn = r.u32();
  for (std::uint32_t i = 0; i < nn; ++i) ed.insert_node(decode_node(r));
  const auto ne = r.u32();
  for (std::uint32_t i = 0; i < ne; ++i) ed.insert_edge(decode_edge(r));
  return g;
}

inline Graph deserialize_graph(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Graph g = decode_graph(r);
  if (!r.done()) throw Error(Errc::ParseError, "trailing bytes after graph");
  return g;
}

/// Line-oriented debug export. One record per line, tab-separated:
///   node <id> <creator> <foray> <product> <inliers> <fabmap> <path_memory> <d0,d1,...>
///   edge <src> <dst> <tx> <ty> <tz> <qw> <qx> <qy> <qz>
inline void export_text(std::ostream& os, const Graph& g) {
  for (const auto& [id, n] : g.nodes()) {
    os << "node\t" << id.str() << '\t' << n.creator << '\t' << n.foray << '\t' << n.product.value
       << '\t' << n.inlier_count << '\t' << format_double(n.fabmap_score) << '\t'
       << n.path_memory << '\t';
    for (std::size_t i = 0; i < n.descriptor.size(); ++i)
      os << (i ? "," : "") << format_double(n.descriptor[i]);
    os << '\n';
  }
  for (const auto& e : g.edges()) {
    os << "edge\t" << e.src.str() << '\t' << e.dst.str();
    for (double t : e.pose.translation) os << '\t' << format_double(t);
    for (double q : e.pose.rotation) os << '\t' << format_double(q);
    os << '\n';
  }
}

}  // namespace expmarket
