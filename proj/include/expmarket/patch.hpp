#pragma once

#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "expmarket/graph.hpp"

namespace expmarket {

enum class Action : std::uint8_t { Delete = 0, Insert = 1 };

/// Atomic insert or delete of one node together with its out-edges. Deletes
/// carry the full payload so the element can be inverted.
struct PatchElement {
  Action action = Action::Insert;
  Node node;
  std::map<NodeId, Pose> out_edges;  // keyed by destination
};

using EdgeKey = std::pair<NodeId, NodeId>;

/// A transformation between two identified graph states.
///
/// Node elements are keyed by id, so one id appears at most once. Edges whose
/// source is not touched by a node element (reconnection edges, edges added
/// to existing content by a diff) are carried as edge-level deletes/inserts.
///
/// Application order: edge deletes, node deletes, node inserts, then every
/// edge insertion (out-edges of inserted nodes and edge-level inserts).
struct Patch {
  StateDigest input_state = StateDigest::empty_state();
  StateDigest output_state = StateDigest::empty_state();
  std::map<NodeId, PatchElement> elements;
  std::map<EdgeKey, Pose> edge_deletes;
  std::map<EdgeKey, Pose> edge_inserts;

  bool empty() const { return elements.empty() && edge_deletes.empty() && edge_inserts.empty(); }

  std::vector<const Node*> inserted_nodes() const {
    std::vector<const Node*> out;
    for (const auto& [id, el] : elements)
      if (el.action == Action::Insert) out.push_back(&el.node);
    return out;
  }

  std::size_t insert_count() const {
    std::size_t n = 0;
    for (const auto& [id, el] : elements) n += el.action == Action::Insert;
    return n;
  }

  std::size_t delete_count() const { return elements.size() - insert_count(); }
};

namespace detail {

template <class T>
struct Transition {
  std::optional<T> before;
  std::optional<T> after;
};

// Per-item (before, after) view of a patch. Composition, inversion and
// normalisation are all done in this form.
struct FlatPatch {
  std::map<NodeId, Transition<Node>> nodes;
  std::map<EdgeKey, Transition<Pose>> edges;
};

inline FlatPatch flatten(const Patch& p) {
  FlatPatch f;
  for (const auto& [id, el] : p.elements) {
    const bool ins = el.action == Action::Insert;
    auto& t = f.nodes[id];
    (ins ? t.after : t.before) = el.node;
    for (const auto& [dst, pose] : el.out_edges) {
      auto& e = f.edges[{id, dst}];
      (ins ? e.after : e.before) = pose.canonical();
    }
  }
  for (const auto& [key, pose] : p.edge_deletes) f.edges[key].before = pose.canonical();
  for (const auto& [key, pose] : p.edge_inserts) f.edges[key].after = pose.canonical();
  return f;
}

inline bool same_node(const std::optional<Node>& a, const std::optional<Node>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || same_content(*a, *b);
}

inline Patch rebuild(const FlatPatch& f, const StateDigest& in, const StateDigest& out) {
  Patch p;
  p.input_state = in;
  p.output_state = out;
  for (const auto& [id, t] : f.nodes) {
    if (same_node(t.before, t.after)) continue;
    if (t.before && t.after) {
      throw Error(Errc::UnsupportedComposition, "node content replaced in place: " + id.str());
    }
    PatchElement el;
    el.action = t.after ? Action::Insert : Action::Delete;
    el.node = t.after ? *t.after : *t.before;
    p.elements.emplace(id, std::move(el));
  }
  for (const auto& [key, t] : f.edges) {
    if (t.before == t.after) continue;
    auto el = p.elements.find(key.first);
    if (el != p.elements.end()) {
      const bool ins = el->second.action == Action::Insert;
      const auto& side = ins ? t.after : t.before;
      const auto& other = ins ? t.before : t.after;
      if (other) {
        throw Error(Errc::UnsupportedComposition,
                    "edge " + key.first.str() + " -> " + key.second.str() +
                        " outlives its source node");
      }
      if (side) el->second.out_edges.emplace(key.second, *side);
    } else {
      if (t.before) p.edge_deletes.emplace(key, *t.before);
      if (t.after) p.edge_inserts.emplace(key, *t.after);
    }
  }
  return p;
}

}  // namespace detail

/// Applies `patch` to a copy of `graph`.
inline Graph apply_patch(const Graph& graph, const Patch& patch) {
  if (graph.digest() != patch.input_state) {
    throw Error(Errc::StateMismatch, "graph is at " + graph.digest().prefix() +
                                         ", patch expects " + patch.input_state.prefix());
  }
  Graph g = graph;
  {
    auto ed = g.edit();
    for (const auto& [key, pose] : patch.edge_deletes) {
      auto cur = g.edge(key.first, key.second);
      if (!cur) {
        throw Error(Errc::MissingTarget, "edge " + key.first.str() + " -> " + key.second.str());
      }
      if (cur->canonical() != pose.canonical()) {
        throw Error(Errc::PatchConflict, "edge pose differs for " + key.first.str());
      }
      ed.erase_edge(key.first, key.second);
    }
    for (const auto& [id, el] : patch.elements) {
      if (el.action != Action::Delete) continue;
      if (!g.contains(id)) throw Error(Errc::MissingTarget, "delete of absent node " + id.str());
      if (!same_content(g.node(id), el.node)) {
        throw Error(Errc::PatchConflict, "delete payload differs for " + id.str());
      }
      const auto& outs = g.out_edges(id);
      bool same_edges = outs.size() == el.out_edges.size();
      for (const auto& [dst, pose] : el.out_edges) {
        auto it = outs.find(dst);
        same_edges = same_edges && it != outs.end() && it->second == pose.canonical();
      }
      if (!same_edges) throw Error(Errc::PatchConflict, "delete out-edges differ for " + id.str());
    }
    for (const auto& [id, el] : patch.elements) {
      if (el.action != Action::Delete) continue;
      for (const auto& [dst, pose] : el.out_edges) ed.erase_edge(id, dst);
    }
    for (const auto& [id, el] : patch.elements)
      if (el.action == Action::Delete) ed.erase_node(id);
    for (const auto& [id, el] : patch.elements)
      if (el.action == Action::Insert) ed.insert_node(el.node);
    for (const auto& [id, el] : patch.elements) {
      if (el.action != Action::Insert) continue;
      for (const auto& [dst, pose] : el.out_edges) ed.insert_edge(Edge{id, dst, pose});
    }
    for (const auto& [key, pose] : patch.edge_inserts)
      ed.insert_edge(Edge{key.first, key.second, pose});
  }
  if (g.digest() != patch.output_state) {
    throw Error(Errc::StateMismatch, "patch produced " + g.digest().prefix() + ", declared " +
                                         patch.output_state.prefix());
  }
  return g;
}

inline Patch invert_patch(const Patch& p) {
  auto f = detail::flatten(p);
  for (auto& [id, t] : f.nodes) std::swap(t.before, t.after);
  for (auto& [key, t] : f.edges) std::swap(t.before, t.after);
  return detail::rebuild(f, p.output_state, p.input_state);
}

/// Sequential composition: applying the result equals applying `first` then
/// `second`. Content inserted by one and deleted by the other cancels.
inline Patch compose(const Patch& first, const Patch& second) {
  if (first.output_state != second.input_state) {
    throw Error(Errc::StateMismatch, "cannot compose " + first.output_state.prefix() + " with " +
                                         second.input_state.prefix());
  }
  const auto a = detail::flatten(first);
  const auto b = detail::flatten(second);
  detail::FlatPatch out = a;
  for (const auto& [id, t] : b.nodes) {
    auto it = out.nodes.find(id);
    if (it == out.nodes.end()) {
      out.nodes.emplace(id, t);
      continue;
    }
    if (!detail::same_node(it->second.after, t.before)) {
      throw Error(Errc::StateMismatch, "patches disagree on node " + id.str());
    }
    it->second.after = t.after;
  }
  for (const auto& [key, t] : b.edges) {
    auto it = out.edges.find(key);
    if (it == out.edges.end()) {
      out.edges.emplace(key, t);
      continue;
    }
    if (it->second.after != t.before) {
      throw Error(Errc::StateMismatch, "patches disagree on edge " + key.first.str());
    }
    it->second.after = t.after;
  }
  return detail::rebuild(out, first.input_state, second.output_state);
}

/// Element-set equality after normalisation; endpoint states are not
/// compared.
inline bool patches_equal(const Patch& a, const Patch& b) {
  const auto na = detail::rebuild(detail::flatten(a), a.input_state, a.output_state);
  const auto nb = detail::rebuild(detail::flatten(b), b.input_state, b.output_state);
  if (na.elements.size() != nb.elements.size() || na.edge_deletes != nb.edge_deletes ||
      na.edge_inserts != nb.edge_inserts) {
    return false;
  }
  for (const auto& [id, el] : na.elements) {
    auto it = nb.elements.find(id);
    if (it == nb.elements.end()) return false;
    const auto& other = it->second;
    if (el.action != other.action || !same_content(el.node, other.node) ||
        el.out_edges != other.out_edges) {
      return false;
    }
  }
  return true;
}

/// The patch taking `from` to `to`, including deletes.
inline Patch make_patch(const Graph& from, const Graph& to) {
  detail::FlatPatch f;
  for (const auto& [id, n] : from.nodes())
    if (!to.contains(id)) f.nodes[id].before = n;
  for (const auto& [id, n] : to.nodes()) {
    if (!from.contains(id)) {
      f.nodes[id].after = n;
    } else if (!same_content(from.node(id), n)) {
      f.nodes[id] = {from.node(id), n};
    }
  }
  for (const auto& e : from.edges()) {
    auto q = to.edge(e.src, e.dst);
    if (!q) f.edges[{e.src, e.dst}].before = e.pose;
    else if (*q != e.pose) f.edges[{e.src, e.dst}] = {e.pose, *q};
  }
  for (const auto& e : to.edges())
    if (!from.edge(e.src, e.dst)) f.edges[{e.src, e.dst}].after = e.pose;
  return detail::rebuild(f, from.digest(), to.digest());
}

namespace detail {

inline bool pose_precedes(const Pose& a, const Pose& b) {
  ByteWriter wa, wb;
  encode_pose(wa, a);
  encode_pose(wb, b);
  return wa.data() < wb.data();
}

}  // namespace detail

/// The union state of two graphs. Nodes present in both keep `mine`'s copy
/// (contents are identical; only path memory may differ). When both carry
/// an edge with different poses, the pose with the smaller canonical
/// encoding wins on both sides.
inline Graph union_state(const Graph& mine, const Graph& theirs) {
  Graph u = mine;
  auto ed = u.edit();
  for (const auto& [id, n] : theirs.nodes())
    if (!u.contains(id)) ed.insert_node(n);
  for (const auto& e : theirs.edges()) {
    auto cur = u.edge(e.src, e.dst);
    if (!cur) {
      ed.insert_edge(e);
    } else if (*cur != e.pose && detail::pose_precedes(e.pose, *cur)) {
      ed.erase_edge(e.src, e.dst);
      ed.insert_edge(e);
    }
  }
  return u;
}

struct DiffPair {
  Patch incoming;  // applied to mine
  Patch outgoing;  // applied to theirs
};

/// Set-difference patches that take both graphs to their union state.
inline DiffPair diff(const Graph& mine, const Graph& theirs) {
  const Graph u = union_state(mine, theirs);
  return DiffPair{make_patch(mine, u), make_patch(theirs, u)};
}

// Canonical Patch wire format (little-endian):
//   input_state[32] output_state[32]
//   u32 element count; per element (ascending id):
//     u8 action, node, u32 edge count, per edge (ascending dst): dst[16] pose[7*f64]
//   u32 edge-delete count; per edge (ascending key): src[16] dst[16] pose
//   u32 edge-insert count; same layout
inline void encode_patch(ByteWriter& w, const Patch& p) {
  w.bytes(p.input_state.bytes);
  w.bytes(p.output_state.bytes);
  w.u32(static_cast<std::uint32_t>(p.elements.size()));
  for (const auto& [id, el] : p.elements) {
    w.u8(static_cast<std::uint8_t>(el.action));
    encode_node(w, el.node);
    w.u32(static_cast<std::uint32_t>(el.out_edges.size()));
    for (const auto& [dst, pose] : el.out_edges) {
      encode_node_id(w, dst);
      encode_pose(w, pose);
    }
  }
  for (const auto* edges : {&p.edge_deletes, &p.edge_inserts}) {
    w.u32(static_cast<std::uint32_t>(edges->size()));
    for (const auto& [key, pose] : *edges) encode_edge(w, Edge{key.first, key.second, pose});
  }
}

inline std::vector<std::uint8_t> serialize_patch(const Patch& p) {
  ByteWriter w;
  encode_patch(w, p);
  return w.take();
}

inline Patch decode_patch(ByteReader& r) {
  Patch p;
  r.bytes(p.input_state.bytes);
  r.bytes(p.output_state.bytes);
  const auto ne = r.u32();
  for (std::uint32_t i = 0; i < ne; ++i) {
    PatchElement el;
    const auto action = r.u8();
    if (action > 1) throw Error(Errc::ParseError, "bad patch action");
    el.action = static_cast<Action>(action);
    el.node = decode_node(r);
    const auto n_edges = r.u32();
    for (std::uint32_t j = 0; j < n_edges; ++j) {
      const NodeId dst = decode_node_id(r);
      el.out_edges.emplace(dst, decode_pose(r));
    }
    const NodeId id = el.node.id;
    if (!p.elements.emplace(id, std::move(el)).second) {
      throw Error(Errc::ParseError, "duplicate element " + id.str());
    }
  }
  for (auto* edges : {&p.edge_deletes, &p.edge_inserts}) {
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      const Edge e = decode_edge(r);
      edges->emplace(EdgeKey{e.src, e.dst}, e.pose);
    }
  }
  return p;
}

inline Patch deserialize_patch(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Patch p = decode_patch(r);
  if (!r.done()) throw Error(Errc::ParseError, "trailing bytes after patch");
  return p;
}

}  // namespace expmarket
