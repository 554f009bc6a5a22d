#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "expmarket/patch.hpp"

namespace expmarket {

struct LocaliserConfig {
  double tau_loc = 0.6;    // descriptor distance accepted as a localisation
  double tau_match = 0.25; // descriptor distance accepted as a merge match
  std::size_t seed_k = 3;
  std::size_t depth = 2;

  void validate() const {
    if (!(tau_loc > 0.0) || !(tau_match > 0.0)) {
      throw Error(Errc::ConfigError, "localiser thresholds must be > 0");
    }
    if (seed_k < 1) throw Error(Errc::ConfigError, "localiser seed_k must be >= 1");
  }
};

/// CPU proxy: number of descriptor comparisons performed.
struct OpCounter {
  std::uint64_t count = 0;
};

inline double descriptor_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// k nearest nodes in appearance space, nearest first, ties by id.
inline std::vector<NodeId> appearance_seed(const Graph& g, std::span<const double> descriptor,
                                           std::size_t k, OpCounter* ops = nullptr) {
  if (k < 1) throw Error(Errc::ConfigError, "appearance_seed needs k >= 1");
  std::vector<std::pair<double, NodeId>> scored;
  scored.reserve(g.node_count());
  for (const auto& [id, n] : g.nodes()) scored.emplace_back(descriptor_distance(descriptor, n.descriptor), id);
  if (ops) ops->count += scored.size();
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end());
  std::vector<NodeId> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
  return out;
}

struct Localisation {
  std::optional<NodeId> node;  // set on success
  double distance = std::numeric_limits<double>::infinity();

  bool ok() const { return node.has_value(); }
};

/// Seeds by appearance, then searches the local neighbourhood of each seed
/// for the closest node. Succeeds when that node is within tau_loc.
inline Localisation localise(const Graph& g, std::span<const double> descriptor,
                             const LocaliserConfig& cfg, OpCounter* ops = nullptr) {
  Localisation best;
  if (g.empty()) return best;
  const auto seeds = appearance_seed(g, descriptor, cfg.seed_k, ops);
  std::set<NodeId> seen(seeds.begin(), seeds.end());
  std::optional<NodeId> best_id;
  auto consider = [&](const NodeId& id, double d) {
    if (!best_id || d < best.distance || (d == best.distance && id < *best_id)) {
      best_id = id;
      best.distance = d;
    }
  };
  for (const auto& s : seeds) consider(s, descriptor_distance(descriptor, g.node(s).descriptor));
  for (const auto& s : seeds) {
    for (const auto& id : neighbourhood(g, s, cfg.depth)) {
      if (!seen.insert(id).second) continue;
      if (ops) ++ops->count;
      consider(id, descriptor_distance(descriptor, g.node(id).descriptor));
    }
  }
  if (best.distance <= cfg.tau_loc) best.node = best_id;
  return best;
}

struct Match {
  NodeId left;
  NodeId right;
  Pose relative_pose;  // right expressed in left's frame
  double distance = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// One-to-one matches, in acceptance order.
struct MatchSet {
  std::vector<Match> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

/// Greedy nearest-first one-to-one matching between the nodes inserted by
/// two divergent patches.
///
/// Candidates within tau_match are accepted by ascending distance. Ties are
/// broken on the (smaller id, larger id) of the pair so the result does not
/// depend on which side is called left. The relative pose is the identity:
/// nodes carry no metric position to derive an offset from.
inline MatchSet match_patches(const Patch& left, const Patch& right, const LocaliserConfig& cfg,
                              OpCounter* ops = nullptr) {
  const auto ls = left.inserted_nodes();
  const auto rs = right.inserted_nodes();
  struct Candidate {
    double distance;
    NodeId lo, hi;
    const Node* l;
    const Node* r;
  };
  std::vector<Candidate> cands;
  for (const Node* l : ls) {
    for (const Node* r : rs) {
      if (l->id == r->id) continue;
      const double d = descriptor_distance(l->descriptor, r->descriptor);
      if (d <= cfg.tau_match) {
        cands.push_back({d, std::min(l->id, r->id), std::max(l->id, r->id), l, r});
      }
    }
  }
  if (ops) ops->count += static_cast<std::uint64_t>(ls.size()) * rs.size();
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.distance, a.lo, a.hi) < std::tie(b.distance, b.lo, b.hi);
  });
  MatchSet out;
  std::set<NodeId> used_l, used_r;
  for (const auto& c : cands) {
    if (used_l.count(c.l->id) || used_r.count(c.r->id)) continue;
    used_l.insert(c.l->id);
    used_r.insert(c.r->id);
    out.pairs.push_back(Match{c.l->id, c.r->id, Pose::identity(), c.distance});
  }
  return out;
}

}  // namespace expmarket
