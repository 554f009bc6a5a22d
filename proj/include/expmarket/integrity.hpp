#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "expmarket/merge.hpp"

namespace expmarket {

/// Everything a battery test may look at: the union state both sides merged
/// towards, the post-merge graph, and the decided matches.
struct MergeContext {
  const Graph& union_graph;
  const Graph& post;
  std::map<NodeId, NodeId> drop_to_keep;
  std::map<NodeId, NodeId> keep_to_drop;

  MergeContext(const Graph& u, const Graph& p, const std::vector<MergePair>& pairs)
      : union_graph(u), post(p) {
    for (const auto& m : pairs) {
      drop_to_keep[m.drop] = m.keep;
      keep_to_drop[m.keep] = m.drop;
    }
  }

  NodeId survivor(const NodeId& id) const {
    auto it = drop_to_keep.find(id);
    return it == drop_to_keep.end() ? id : it->second;
  }
};

struct IntegrityTest {
  int id = 0;
  std::string name;
  std::function<bool(const NodeId&, const MergeContext&)> predicate;
};

using Battery = std::vector<IntegrityTest>;

struct TestVector {
  std::vector<std::uint8_t> bits;

  std::string str() const {
    std::string s;
    for (auto b : bits) s += b ? '1' : '0';
    return s;
  }

  friend auto operator<=>(const TestVector&, const TestVector&) = default;
};

namespace detail {

inline bool adjacent(const Graph& g, const NodeId& a, const NodeId& b) {
  return g.edge(a, b).has_value() || g.edge(b, a).has_value();
}

inline std::set<NodeId> neighbours(const Graph& g, const NodeId& id) {
  std::set<NodeId> out = g.in_edges(id);
  for (const auto& [dst, pose] : g.out_edges(id)) out.insert(dst);
  return out;
}

}  // namespace detail

/// (i) the kept node is adjacent to every former neighbour of the dropped
/// node; (ii) kept and dropped nodes never coexist after the merge. Nodes
/// outside any match pass both.
inline Battery builtin_tests() {
  Battery b;
  b.push_back({1, "reconnection", [](const NodeId& n, const MergeContext& ctx) {
                 NodeId drop = n, keep = n;
                 if (auto it = ctx.drop_to_keep.find(n); it != ctx.drop_to_keep.end()) {
                   keep = it->second;
                 } else if (auto jt = ctx.keep_to_drop.find(n); jt != ctx.keep_to_drop.end()) {
                   drop = jt->second;
                 } else {
                   return true;
                 }
                 if (!ctx.union_graph.contains(drop) || !ctx.post.contains(keep)) return false;
                 for (const auto& nb : detail::neighbours(ctx.union_graph, drop)) {
                   const NodeId target = ctx.survivor(nb);
                   if (target == keep) continue;
                   if (!ctx.post.contains(target) || !detail::adjacent(ctx.post, keep, target)) {
                     return false;
                   }
                 }
                 return true;
               }});
  b.push_back({2, "exclusion", [](const NodeId& n, const MergeContext& ctx) {
                 NodeId drop = n, keep = n;
                 if (auto it = ctx.drop_to_keep.find(n); it != ctx.drop_to_keep.end()) {
                   keep = it->second;
                 } else if (auto jt = ctx.keep_to_drop.find(n); jt != ctx.keep_to_drop.end()) {
                   drop = jt->second;
                 } else {
                   return true;
                 }
                 return !(ctx.post.contains(drop) && ctx.post.contains(keep));
               }});
  return b;
}

inline TestVector evaluate_node(const Battery& battery, const NodeId& n, const MergeContext& ctx) {
  TestVector v;
  v.bits.reserve(battery.size());
  for (const auto& t : battery) v.bits.push_back(t.predicate(n, ctx) ? 1 : 0);
  return v;
}

/// One vector per node of the union state, collected as a multiset.
inline std::map<TestVector, std::size_t> evaluate_battery(const Battery& battery,
                                                          const MergeContext& ctx) {
  if (battery.empty()) throw Error(Errc::ConfigError, "battery is empty");
  std::map<TestVector, std::size_t> out;
  for (const auto& [id, n] : ctx.union_graph.nodes()) ++out[evaluate_node(battery, id, ctx)];
  return out;
}

struct CoverageReport {
  std::map<TestVector, std::size_t> multiset;
  std::size_t battery_size = 0;

  std::size_t distinct() const { return multiset.size(); }
  bool sufficient() const { return distinct() == (std::size_t{1} << battery_size); }

  void add(const std::map<TestVector, std::size_t>& m) {
    for (const auto& [v, c] : m) multiset[v] += c;
  }

  std::size_t count_failing() const {
    std::size_t n = 0;
    for (const auto& [v, c] : multiset) {
      for (auto b : v.bits) {
        if (!b) {
          n += c;
          break;
        }
      }
    }
    return n;
  }
};

struct ConfigurationParams {
  std::size_t common = 6;
  std::size_t left = 8;
  std::size_t right = 8;
  double overlap = 0.5;  // fraction of the smaller side duplicated across sides
  std::size_t dim = 16;
  double noise = 0.005;  // per-component spread of a near-duplicate
};

/// A shared base and two patches that diverge from it.
struct DivergentPair {
  Graph base;
  Patch left;
  Patch right;

  Repository left_repo() const { return repo_after(left); }
  Repository right_repo() const { return repo_after(right); }

 private:
  Repository repo_after(const Patch& p) const {
    Repository r;
    r.commit(make_patch(Graph{}, base));
    r.commit(p);
    return r;
  }
};

namespace detail {

inline Node random_node(Rng& rng, NodeIdGenerator& ids, std::vector<double> desc, RobotId creator) {
  Node n;
  n.id = ids.next();
  n.descriptor = std::move(desc);
  n.inlier_count = rng.below(200);
  n.fabmap_score = rng.uniform();
  n.path_memory = rng.below(8);
  n.product = ProductIndex{static_cast<std::uint32_t>(rng.below(4))};
  n.creator = creator;
  return n;
}

inline std::vector<double> random_descriptor(Rng& rng, std::size_t dim) {
  std::vector<double> d(dim);
  for (auto& x : d) x = rng.uniform();
  return d;
}

// Adds a chain of nodes to `g`, hanging off `anchor` when given.
inline void add_chain(Graph& g, const std::vector<Node>& nodes, std::optional<NodeId> anchor,
                      Rng& rng) {
  auto ed = g.edit();
  std::optional<NodeId> prev = anchor;
  for (const auto& n : nodes) {
    ed.insert_node(n);
    if (prev) ed.insert_edge(Edge{*prev, n.id, Pose::from_translation(1.0 + rng.uniform())});
    prev = n.id;
  }
}

}  // namespace detail

/// Seeded corpus of divergent patch pairs. Each side extends the shared base
/// chain with its own chain; a leading fraction of the right chain duplicates
/// left content up to small descriptor noise.
inline std::vector<DivergentPair> generate_configurations(Rng& rng, const ConfigurationParams& params,
                                                          std::size_t count) {
  std::vector<DivergentPair> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    NodeIdGenerator ids(rng.next(), 0);
    DivergentPair pair;
    std::vector<Node> base_nodes;
    for (std::size_t i = 0; i < params.common; ++i)
      base_nodes.push_back(detail::random_node(rng, ids, detail::random_descriptor(rng, params.dim), 0));
    detail::add_chain(pair.base, base_nodes, std::nullopt, rng);

    auto anchor = [&]() -> std::optional<NodeId> {
      if (base_nodes.empty()) return std::nullopt;
      return base_nodes[rng.below(base_nodes.size())].id;
    };
    std::vector<Node> left_nodes;
    for (std::size_t i = 0; i < params.left; ++i)
      left_nodes.push_back(detail::random_node(rng, ids, detail::random_descriptor(rng, params.dim), 1));
    const std::size_t dup = static_cast<std::size_t>(
        std::llround(params.overlap * static_cast<double>(std::min(params.left, params.right))));
    std::vector<Node> right_nodes;
    for (std::size_t i = 0; i < params.right; ++i) {
      std::vector<double> desc;
      if (i < dup) {
        desc = left_nodes[i].descriptor;
        for (auto& x : desc) x += rng.normal(0.0, params.noise);
      } else {
        desc = detail::random_descriptor(rng, params.dim);
      }
      right_nodes.push_back(detail::random_node(rng, ids, std::move(desc), 2));
    }
    Graph l = pair.base, r = pair.base;
    detail::add_chain(l, left_nodes, anchor(), rng);
    detail::add_chain(r, right_nodes, anchor(), rng);
    pair.left = make_patch(pair.base, l);
    pair.right = make_patch(pair.base, r);
    out.push_back(std::move(pair));
  }
  return out;
}

/// Result of merging one configuration, as seen from the left side.
struct MergeOutcome {
  Graph union_graph;
  Graph post_left;
  Graph post_right;
  std::vector<MergePair> pairs;
};

inline MergeOutcome merge_configuration(const DivergentPair& cfg, CommutationPolicy policy) {
  policy.check_integrity = false;
  auto l = cfg.left_repo();
  auto r = cfg.right_repo();
  MergeOutcome out;
  out.union_graph = union_state(l.graph, r.graph);
  auto stats = trade_merge_inplace(l, r, policy);
  out.post_left = l.graph;
  out.post_right = r.graph;
  out.pairs = std::move(stats.pairs);
  return out;
}

inline std::map<TestVector, std::size_t> evaluate_configuration(const Battery& battery,
                                                                 const DivergentPair& cfg,
                                                                 const CommutationPolicy& policy) {
  const auto outcome = merge_configuration(cfg, policy);
  return evaluate_battery(battery, MergeContext(outcome.union_graph, outcome.post_left, outcome.pairs));
}

// ---------------------------------------------------------------------------
// Randomised convergence harness

struct ConvergenceParams {
  std::size_t robots = 2;
  std::size_t forays = 9;
  std::size_t trials = 100;
  std::vector<double> mu{10.0};     // one per robot, or a single value for all
  std::vector<double> sigma{2.0};
  std::uint64_t seed = 0;
  CommutationPolicy policy;
  std::size_t places = 64;          // shared appearance vocabulary for toy nodes
  std::size_t dim = 16;
  unsigned jobs = 1;

  double mu_of(std::size_t r) const { return mu.size() == 1 ? mu[0] : mu.at(r); }
  double sigma_of(std::size_t r) const { return sigma.size() == 1 ? sigma[0] : sigma.at(r); }

  void validate() const {
    if (robots < 2) throw Error(Errc::ConfigError, "robots must be >= 2");
    if (forays < 1) throw Error(Errc::ConfigError, "forays must be >= 1");
    if (trials < 1) throw Error(Errc::ConfigError, "trials must be >= 1");
    for (const auto* v : {&mu, &sigma}) {
      if (v->size() != 1 && v->size() != robots) {
        throw Error(Errc::ConfigError, "mu/sigma need one value or one per robot");
      }
      for (double x : *v) {
        if (!std::isfinite(x) || x < 0.0) throw Error(Errc::ConfigError, "mu/sigma must be >= 0");
      }
    }
  }
};

struct TrialRecord {
  // [k][robot]
  std::vector<std::vector<std::size_t>> node_counts;
  std::vector<std::vector<std::string>> digest_prefix;
  std::size_t divergence_events = 0;
  std::vector<std::vector<std::size_t>> mutual_history;  // at the last point
};

struct ConvergenceReport {
  std::size_t R = 0, K = 0, M = 0;
  std::size_t divergence_events = 0;
  std::vector<TrialRecord> trials;
  std::vector<std::vector<double>> mutual_history;  // mean over trials

  /// Team node count at point k (1-based) of one trial; robot 0's map.
  std::size_t node_count(std::size_t trial, std::size_t k) const {
    return trials.at(trial).node_counts.at(k - 1).at(0);
  }
};

namespace detail {

inline Patch toy_patch(const Graph& g, Rng& rng, std::size_t size, RobotId robot,
                       std::uint32_t foray, NodeIdGenerator& ids,
                       const std::vector<std::vector<double>>& places) {
  Graph to = g;
  {
    auto ed = to.edit();
    std::optional<NodeId> prev;
    if (!g.empty()) {
      auto it = g.nodes().begin();
      std::advance(it, static_cast<std::ptrdiff_t>(rng.below(g.node_count())));
      prev = it->first;
    }
    for (std::size_t i = 0; i < size; ++i) {
      auto desc = places[rng.below(places.size())];
      for (auto& x : desc) x += rng.normal(0.0, 0.01);
      Node n = random_node(rng, ids, std::move(desc), robot);
      n.foray = foray;
      const NodeId id = n.id;
      ed.insert_node(std::move(n));
      if (prev) ed.insert_edge(Edge{*prev, id, Pose::from_translation(5.0)});
      prev = id;
    }
  }
  return make_patch(g, to);
}

inline std::size_t common_history(const History& a, const History& b) {
  std::set<StateDigest> sa;
  for (const auto& p : a.patches) sa.insert(p.output_state);
  std::size_t n = 0;
  for (const auto& p : b.patches) n += sa.count(p.output_state);
  return n;
}

inline TrialRecord run_convergence_trial(const ConvergenceParams& prm, std::size_t trial) {
  Rng rng(derive_seed(prm.seed, trial, 0));
  std::vector<std::vector<double>> places(prm.places);
  for (auto& p : places) p = random_descriptor(rng, prm.dim);
  std::vector<Repository> team(prm.robots);
  std::vector<NodeIdGenerator> ids;
  for (std::size_t r = 0; r < prm.robots; ++r)
    ids.emplace_back(derive_seed(prm.seed, trial, r + 1), static_cast<RobotId>(r));
  CommutationPolicy policy = prm.policy;
  if (policy.choice.kind == ChoiceKind::Coin) {
    policy.choice = ChoicePolicy::coin_flip(derive_seed(prm.seed, trial, 0xC0FFEE));
  }

  TrialRecord rec;
  for (std::size_t k = 1; k <= prm.forays; ++k) {
    for (std::size_t r = 0; r < prm.robots; ++r) {
      const double draw = rng.normal(prm.mu_of(r), prm.sigma_of(r));
      const auto size = static_cast<std::size_t>(std::max(0.0, std::round(draw)));
      team[r].commit(toy_patch(team[r].graph, rng, size, static_cast<RobotId>(r),
                               static_cast<std::uint32_t>(k), ids[r], places));
    }
    const std::size_t max_sweeps = prm.robots * prm.robots + 4;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
      bool changed = false;
      for (std::size_t i = 0; i < prm.robots; ++i) {
        for (std::size_t j = 0; j < prm.robots; ++j) {
          if (i == j) continue;
          const auto di = team[i].digest(), dj = team[j].digest();
          trade_merge_inplace(team[i], team[j], policy);
          changed = changed || team[i].digest() != di || team[j].digest() != dj;
        }
      }
      if (!changed) break;
    }
    std::vector<std::size_t> counts;
    std::vector<std::string> prefixes;
    bool diverged = false;
    for (const auto& repo : team) {
      counts.push_back(repo.graph.node_count());
      prefixes.push_back(repo.digest().prefix());
      diverged = diverged || repo.digest() != team[0].digest();
    }
    rec.divergence_events += diverged;
    rec.node_counts.push_back(std::move(counts));
    rec.digest_prefix.push_back(std::move(prefixes));
  }
  rec.mutual_history.assign(prm.robots, std::vector<std::size_t>(prm.robots, 0));
  for (std::size_t i = 0; i < prm.robots; ++i)
    for (std::size_t j = 0; j < prm.robots; ++j)
      rec.mutual_history[i][j] = common_history(team[i].history, team[j].history);
  return rec;
}

}  // namespace detail

/// Forays of normally sized toy patches followed by all-pairs trading until
/// quiescent, repeated over independent seeded trials.
inline ConvergenceReport monte_carlo_convergence(const ConvergenceParams& prm) {
  prm.validate();
  ConvergenceReport rep;
  rep.R = prm.robots;
  rep.K = prm.forays;
  rep.M = prm.trials;
  rep.trials.resize(prm.trials);
  const unsigned jobs = std::max(1u, std::min<unsigned>(prm.jobs, static_cast<unsigned>(prm.trials)));
  if (jobs == 1) {
    for (std::size_t t = 0; t < prm.trials; ++t) rep.trials[t] = detail::run_convergence_trial(prm, t);
  } else {
    std::vector<std::future<void>> workers;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.push_back(std::async(std::launch::async, [&] {
        for (std::size_t t = next++; t < prm.trials; t = next++) {
          try {
            rep.trials[t] = detail::run_convergence_trial(prm, t);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      }));
    }
    for (auto& w : workers) w.get();
    if (failure) std::rethrow_exception(failure);
  }
  rep.mutual_history.assign(prm.robots, std::vector<double>(prm.robots, 0.0));
  for (const auto& t : rep.trials) {
    rep.divergence_events += t.divergence_events;
    for (std::size_t i = 0; i < prm.robots; ++i)
      for (std::size_t j = 0; j < prm.robots; ++j)
        rep.mutual_history[i][j] += static_cast<double>(t.mutual_history[i][j]) / static_cast<double>(prm.trials);
  }
  return rep;
}

}  // namespace expmarket
