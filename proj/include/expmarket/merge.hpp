#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "expmarket/localiser.hpp"
#include "expmarket/repository.hpp"

namespace expmarket {

enum class ChoiceKind { Inliers, Fabmap, PathMemory, Lhs, Coin };

inline const char* to_string(ChoiceKind k) {
  switch (k) {
    case ChoiceKind::Inliers: return "inliers";
    case ChoiceKind::Fabmap: return "fabmap";
    case ChoiceKind::PathMemory: return "path-memory";
    case ChoiceKind::Lhs: return "lhs";
    case ChoiceKind::Coin: return "coin";
  }
  return "?";
}

/// Rule deciding which of two matched nodes survives a merge.
struct ChoicePolicy {
  ChoiceKind kind = ChoiceKind::Inliers;
  std::shared_ptr<Rng> coin;  // only read by ChoiceKind::Coin

  bool is_pure() const {
    return kind == ChoiceKind::Inliers || kind == ChoiceKind::Fabmap ||
           kind == ChoiceKind::PathMemory;
  }

  static ChoicePolicy coin_flip(std::uint64_t seed) {
    return ChoicePolicy{ChoiceKind::Coin, std::make_shared<Rng>(seed)};
  }
};

inline double gamma_score(const Node& n, const ChoicePolicy& policy) {
  switch (policy.kind) {
    case ChoiceKind::Inliers: return static_cast<double>(n.inlier_count);
    case ChoiceKind::Fabmap: return n.fabmap_score;
    case ChoiceKind::PathMemory: return static_cast<double>(n.path_memory);
    default: break;
  }
  throw Error(Errc::NonScoringPolicy, std::string("policy has no score: ") + to_string(policy.kind));
}

struct Choice {
  NodeId keep;
  NodeId drop;
};

inline Choice choose(const Node& a, const Node& b, const ChoicePolicy& policy) {
  switch (policy.kind) {
    case ChoiceKind::Lhs: return {a.id, b.id};
    case ChoiceKind::Coin: {
      if (!policy.coin) throw Error(Errc::ConfigError, "coin policy without a stream");
      return policy.coin->below(2) == 0 ? Choice{a.id, b.id} : Choice{b.id, a.id};
    }
    default: break;
  }
  const double ga = gamma_score(a, policy);
  const double gb = gamma_score(b, policy);
  if (ga > gb || (ga == gb && a.id < b.id)) return {a.id, b.id};
  return {b.id, a.id};
}

enum class CommutationKind { Union, Match };

/// Deliberate defects used to exercise the integrity battery.
struct MergeFaults {
  bool skip_reconnect = false;
  bool skip_delete = false;

  bool any() const { return skip_reconnect || skip_delete; }
};

struct CommutationPolicy {
  CommutationKind kind = CommutationKind::Union;
  ChoicePolicy choice;
  LocaliserConfig localiser;
  bool allow_nonsymmetric = false;
  MergeFaults faults;
  bool check_integrity = true;

  static CommutationPolicy union_policy() { return {}; }

  static CommutationPolicy match(ChoiceKind kind, LocaliserConfig cfg = {}) {
    CommutationPolicy p;
    p.kind = CommutationKind::Match;
    p.choice.kind = kind;
    p.localiser = cfg;
    return p;
  }
};

/// Edges that re-attach the neighbours of `drop` to `keep`.
///
/// Poses are carried through `drop_to_keep` (keep expressed in drop's frame).
/// Edges that would become self-loops are skipped, as are edges already
/// present in the graph; sources and destinations are visited in id order.
inline std::vector<Edge> reconnect(const Graph& g, const NodeId& drop, const NodeId& keep,
                                   const Pose& drop_to_keep) {
  if (!g.contains(drop)) throw Error(Errc::UnknownNode, drop.str());
  std::vector<Edge> out;
  std::set<EdgeKey> seen;
  auto emit = [&](const NodeId& s, const NodeId& d, const Pose& pose) {
    if (s == d || g.edge(s, d) || !seen.insert({s, d}).second) return;
    out.push_back(Edge{s, d, pose.canonical()});
  };
  for (const auto& src : g.in_edges(drop)) emit(src, keep, g.out_edges(src).at(drop).compose(drop_to_keep));
  const Pose keep_to_drop = drop_to_keep.inverse();
  for (const auto& [dst, pose] : g.out_edges(drop)) emit(keep, dst, keep_to_drop.compose(pose));
  return out;
}

/// One decided match: `drop` is replaced by `keep` everywhere.
struct MergePair {
  NodeId keep;
  NodeId drop;
  Pose drop_to_keep;

  friend bool operator==(const MergePair&, const MergePair&) = default;
};

inline std::vector<MergePair> decide_pairs(const Patch& outgoing, const Patch& incoming,
                                           const CommutationPolicy& policy,
                                           OpCounter* ops = nullptr) {
  std::vector<MergePair> pairs;
  if (policy.kind != CommutationKind::Match) return pairs;
  const auto matches = match_patches(outgoing, incoming, policy.localiser, ops);
  for (const auto& m : matches.pairs) {
    const Node& l = outgoing.elements.at(m.left).node;
    const Node& r = incoming.elements.at(m.right).node;
    const auto c = choose(l, r, policy.choice);
    const Pose to_keep = c.keep == m.left ? m.relative_pose.inverse() : m.relative_pose;
    pairs.push_back(MergePair{c.keep, c.drop, to_keep});
  }
  return pairs;
}

/// Replaces every dropped node of `pairs` by its keep, in pair order.
inline void apply_pairs(Graph& g, const std::vector<MergePair>& pairs, const MergeFaults& faults) {
  auto ed = g.edit();
  for (const auto& p : pairs) {
    if (!g.contains(p.drop) || !g.contains(p.keep)) continue;
    if (!faults.skip_reconnect) {
      for (const auto& e : reconnect(g, p.drop, p.keep, p.drop_to_keep)) ed.insert_edge(e);
    }
    if (!faults.skip_delete) ed.detach_and_erase(p.drop);
  }
}

struct LocalCommute {
  Patch patch;
  std::vector<MergePair> pairs;
};

/// The convergent patch for the side holding `mine`, given its diff pair.
inline LocalCommute commute_local(const Graph& mine, const Patch& incoming, const Patch& outgoing,
                                  const CommutationPolicy& policy, OpCounter* ops = nullptr) {
  LocalCommute out;
  out.pairs = decide_pairs(outgoing, incoming, policy, ops);
  if (out.pairs.empty() || (policy.faults.skip_delete && policy.faults.skip_reconnect)) {
    out.patch = incoming;
    return out;
  }
  const Graph u = apply_patch(mine, incoming);
  Graph w = u;
  apply_pairs(w, out.pairs, policy.faults);
  out.patch = compose(incoming, make_patch(u, w));
  return out;
}

struct ConvergentPatchPair {
  Patch for_left;
  Patch for_right;
  std::vector<MergePair> pairs;
};

/// Turns a diff pair into patches that take both sides to one state.
/// `mine` is the graph `incoming` applies to; the other side is recovered by
/// undoing `outgoing` from the union state.
inline ConvergentPatchPair commute(const Graph& mine, const Patch& incoming, const Patch& outgoing,
                                   const CommutationPolicy& policy, OpCounter* ops = nullptr) {
  if (policy.kind == CommutationKind::Union) return {incoming, outgoing, {}};
  const Graph u = apply_patch(mine, incoming);
  const Graph theirs = apply_patch(u, invert_patch(outgoing));
  auto left = commute_local(mine, incoming, outgoing, policy, ops);
  auto right = commute_local(theirs, outgoing, incoming, policy, ops);
  return {std::move(left.patch), std::move(right.patch), std::move(left.pairs)};
}

/// Restricts a trade to content in the listed products; unset means the whole map.
struct TradeScope {
  std::optional<std::set<ProductIndex>> products;

  bool full() const { return !products.has_value(); }
};

struct TradeStats {
  std::size_t nodes_in = 0;       // nodes inserted on the left
  std::size_t nodes_out = 0;      // nodes inserted on the right
  std::size_t nodes_deleted = 0;  // deletes across both sides
  std::size_t matches = 0;
  std::size_t bytes = 0;          // serialized size of both convergent patches
  std::uint64_t match_ops = 0;      // descriptor comparisons, both sides
  std::uint64_t left_match_ops = 0;
  std::uint64_t right_match_ops = 0;
  bool converged = false;         // both digests equal afterwards
  std::vector<MergePair> pairs;        // as decided by the left side
  std::vector<MergePair> right_pairs;  // as decided by the right side
  Patch left_patch;
  Patch right_patch;
};

namespace detail {

// Resolves a tombstoned id to its surviving replacement. A cycle resolves to
// its smallest member.
inline NodeId resolve_keep(const std::map<NodeId, Tombstone>& tombs, const NodeId& id) {
  std::vector<NodeId> path{id};
  std::set<NodeId> seen{id};
  NodeId cur = id;
  for (auto it = tombs.find(cur); it != tombs.end(); it = tombs.find(cur)) {
    cur = it->second.keep;
    if (!seen.insert(cur).second) {
      auto start = std::find(path.begin(), path.end(), cur);
      return *std::min_element(start, path.end());
    }
    path.push_back(cur);
  }
  return cur;
}

inline Pose resolve_pose(const std::map<NodeId, Tombstone>& tombs, const NodeId& id,
                         const NodeId& target) {
  Pose acc = Pose::identity();
  NodeId cur = id;
  std::set<NodeId> seen{id};
  while (cur != target) {
    auto it = tombs.find(cur);
    if (it == tombs.end()) break;
    acc = acc.compose(it->second.drop_to_keep);
    cur = it->second.keep;
    if (!seen.insert(cur).second) break;
  }
  return acc;
}

inline void union_tombstones(std::map<NodeId, Tombstone>& into,
                             const std::map<NodeId, Tombstone>& from) {
  for (const auto& [drop, t] : from) {
    auto [it, fresh] = into.emplace(drop, t);
    if (!fresh && t.keep < it->second.keep) it->second = t;
  }
}

}  // namespace detail

/// Removes every node whose tombstone resolves to a node held in `g`.
inline std::size_t purge_tombstoned(Graph& g, const std::map<NodeId, Tombstone>& tombs,
                                    const MergeFaults& faults = {}) {
  std::vector<MergePair> pairs;
  for (const auto& [drop, t] : tombs) {
    if (!g.contains(drop)) continue;
    const NodeId keep = detail::resolve_keep(tombs, drop);
    if (keep == drop || !g.contains(keep)) continue;
    pairs.push_back(MergePair{keep, drop, detail::resolve_pose(tombs, drop, keep)});
  }
  apply_pairs(g, pairs, faults);
  return pairs.size();
}

namespace detail {

inline Graph scoped_view(const Graph& g, const Graph& other, const TradeScope& scope) {
  if (scope.full()) return g;
  return induced_subgraph(g, [&](const Node& n) {
    return scope.products->count(n.product) != 0 || other.contains(n.id);
  });
}

inline std::size_t component_count(const Graph& g) { return connected_components(g).size(); }

}  // namespace detail

/// Pairwise exchange of map content. Both repositories are updated in place
/// and each history gains one patch (when its graph changed).
///
/// Both sides see the same diff between the two scoped views. Each decides
/// matches from its own perspective and applies them to its union state; nodes
/// dropped by a match are remembered as tombstones so later trades with third
/// parties still carrying them converge on the kept node.
inline TradeStats trade_merge_inplace(Repository& left, Repository& right,
                                      const CommutationPolicy& policy,
                                      const TradeScope& scope = {}) {
  if (policy.kind == CommutationKind::Match && !policy.choice.is_pure() &&
      !policy.allow_nonsymmetric) {
    throw Error(Errc::NonSymmetricPolicy,
                std::string("choice policy is not symmetric: ") + to_string(policy.choice.kind));
  }
  TradeStats stats;
  OpCounter ops;
  const Graph view_l = detail::scoped_view(left.graph, right.graph, scope);
  const Graph view_r = detail::scoped_view(right.graph, left.graph, scope);
  const DiffPair d = diff(view_l, view_r);

  std::map<NodeId, Tombstone> shared = left.tombstones;
  detail::union_tombstones(shared, right.tombstones);

  auto settle = [&](Repository& repo, const Graph& other_view, const Patch& outgoing,
                    const Patch& incoming) {
    const std::uint64_t ops_before = ops.count;
    const auto pairs = decide_pairs(outgoing, incoming, policy, &ops);
    const std::uint64_t side_ops = ops.count - ops_before;
    auto tombs = shared;
    if (!policy.faults.skip_delete) {
      for (const auto& p : pairs) {
        if (detail::resolve_keep(tombs, p.keep) == p.drop) continue;
        detail::union_tombstones(tombs, {{p.drop, Tombstone{p.keep, p.drop_to_keep}}});
      }
    }
    Graph w = union_state(repo.graph, other_view);
    apply_pairs(w, pairs, policy.faults);
    if (!policy.faults.skip_delete) purge_tombstoned(w, tombs, policy.faults);
    if (policy.check_integrity) {
      const std::size_t before =
          detail::component_count(repo.graph) + detail::component_count(other_view);
      const std::size_t after = detail::component_count(w);
      if (after > before) {
        throw Error(Errc::IntegrityViolation, "merge produced " + std::to_string(after) +
                                                  " components from " + std::to_string(before));
      }
    }
    Patch p = make_patch(repo.graph, w);
    repo.graph = std::move(w);
    if (!p.empty()) repo.history.append(p);
    repo.tombstones = std::move(tombs);
    return std::make_tuple(std::move(p), pairs, side_ops);
  };
  auto [lp, lpairs, lops] = settle(left, view_r, d.outgoing, d.incoming);
  auto [rp, rpairs, rops] = settle(right, view_l, d.incoming, d.outgoing);
  stats.left_match_ops = lops;
  stats.right_match_ops = rops;
  stats.left_patch = std::move(lp);
  stats.right_patch = std::move(rp);
  stats.pairs = std::move(lpairs);
  stats.right_pairs = std::move(rpairs);
  stats.matches = stats.pairs.size();
  stats.match_ops = ops.count;

  stats.nodes_in = stats.left_patch.insert_count();
  stats.nodes_out = stats.right_patch.insert_count();
  stats.nodes_deleted = stats.left_patch.delete_count() + stats.right_patch.delete_count();
  stats.bytes = serialize_patch(stats.left_patch).size() + serialize_patch(stats.right_patch).size();
  stats.converged = left.digest() == right.digest();
  return stats;
}

struct TradeResult {
  Repository left;
  Repository right;
  TradeStats stats;
};

inline TradeResult trade_merge(Repository left, Repository right, const CommutationPolicy& policy,
                               const TradeScope& scope = {}) {
  auto stats = trade_merge_inplace(left, right, policy, scope);
  return {std::move(left), std::move(right), std::move(stats)};
}

}  // namespace expmarket
