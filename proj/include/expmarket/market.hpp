#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "expmarket/merge.hpp"

namespace expmarket {

/// Value a buyer observed from one trade with `seller`.
struct Measurement {
  RobotId seller = 0;
  std::uint64_t k = 0;
  double value = 0.0;
  std::set<NodeId> patch_node_ids;
};

/// Streaming mean and spread of trade values for one seller.
struct Belief {
  RobotId seller = 0;
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations from the mean

  bool initialized() const { return count > 0; }
  double variance() const { return count < 2 ? 0.0 : m2 / static_cast<double>(count - 1); }
};

inline Belief update_belief(Belief b, const Measurement& m) {
  if (m.seller != b.seller) {
    throw Error(Errc::ConfigError, "measurement for seller " + std::to_string(m.seller) +
                                       " applied to belief about " + std::to_string(b.seller));
  }
  b.count += 1;
  const double delta = m.value - b.mean;
  b.mean += delta / static_cast<double>(b.count);
  b.m2 += delta * (m.value - b.mean);
  return b;
}

/// Mean choice score over the nodes a patch inserts.
inline double price_patch(const Patch& p, const ChoicePolicy& policy) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const Node* node : p.inserted_nodes()) {
    sum += gamma_score(*node, policy);
    ++n;
  }
  if (n == 0) throw Error(Errc::EmptyPatch, "cannot price a patch without inserts");
  return sum / static_cast<double>(n);
}

struct SamplingBudget {
  std::size_t max_nodes = 8;
  std::size_t bytes_per_node = 512;

  void validate() const {
    if (max_nodes < 1) throw Error(Errc::ConfigError, "sample max_nodes must be >= 1");
  }

  std::size_t bytes_for(const Patch& sample) const { return sample.insert_count() * bytes_per_node; }
};

/// The highest-scoring inserted nodes of `content` (ties by id) with the edges
/// among them, as a patch from the empty graph.
inline Patch sample_for_query(const Patch& content, const SamplingBudget& budget,
                              const ChoicePolicy& policy) {
  budget.validate();
  auto nodes = content.inserted_nodes();
  std::sort(nodes.begin(), nodes.end(), [&](const Node* a, const Node* b) {
    const double ga = gamma_score(*a, policy), gb = gamma_score(*b, policy);
    return ga != gb ? ga > gb : a->id < b->id;
  });
  if (nodes.size() > budget.max_nodes) nodes.resize(budget.max_nodes);
  Graph g;
  {
    auto ed = g.edit();
    for (const Node* n : nodes) ed.insert_node(*n);
    for (const Node* n : nodes) {
      for (const auto& [dst, pose] : content.elements.at(n->id).out_edges)
        if (g.contains(dst)) ed.insert_edge(Edge{n->id, dst, pose});
    }
    for (const auto& [key, pose] : content.edge_inserts)
      if (g.contains(key.first) && g.contains(key.second) && !g.edge(key.first, key.second))
        ed.insert_edge(Edge{key.first, key.second, pose});
  }
  return make_patch(Graph{}, g);
}

/// The seller whose offer deviates least from the buyer's belief about it.
/// Sellers without an initialised belief are not eligible.
inline RobotId adjudicate(const std::map<RobotId, double>& offers,
                          const std::map<RobotId, Belief>& beliefs) {
  std::optional<RobotId> best;
  double best_dev = 0.0;
  for (const auto& [seller, offer] : offers) {
    auto it = beliefs.find(seller);
    if (it == beliefs.end() || !it->second.initialized()) continue;
    const double dev = std::abs(offer - it->second.mean);
    if (!best || dev < best_dev || (dev == best_dev && seller < *best)) {
      best = seller;
      best_dev = dev;
    }
  }
  if (!best) throw Error(Errc::NoEligibleSellers, "no offer from a seller with a belief");
  return *best;
}

/// Offers ordered by increasing deviation from belief, uninitialised sellers
/// last (by id).
inline std::vector<RobotId> rank_offers(const std::map<RobotId, double>& offers,
                                        const std::map<RobotId, Belief>& beliefs) {
  std::vector<std::pair<double, RobotId>> known;
  std::vector<RobotId> unknown;
  for (const auto& [seller, offer] : offers) {
    auto it = beliefs.find(seller);
    if (it == beliefs.end() || !it->second.initialized()) {
      unknown.push_back(seller);
    } else {
      known.emplace_back(std::abs(offer - it->second.mean), seller);
    }
  }
  std::sort(known.begin(), known.end());
  std::vector<RobotId> out;
  for (const auto& [dev, s] : known) out.push_back(s);
  out.insert(out.end(), unknown.begin(), unknown.end());
  return out;
}

enum class StrategyKind { All, BanditExplore, BanditExploit, BanditExploreExploit, Central };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::All: return "ALL";
    case StrategyKind::BanditExplore: return "BANDIT_EXPLORE";
    case StrategyKind::BanditExploit: return "BANDIT_EXPLOIT";
    case StrategyKind::BanditExploreExploit: return "BANDIT_EXPLORE_EXPLOIT";
    case StrategyKind::Central: return "CENTRAL";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy_kind(std::string_view s) {
  for (auto k : {StrategyKind::All, StrategyKind::BanditExplore, StrategyKind::BanditExploit,
                 StrategyKind::BanditExploreExploit, StrategyKind::Central}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct TradingStrategy {
  StrategyKind kind = StrategyKind::All;
  double exploit_fraction = 0.0;  // probability of exploiting, BANDIT_EXPLORE_EXPLOIT only
  RobotId central_id = 0;

  void validate() const {
    if (!(exploit_fraction >= 0.0 && exploit_fraction <= 1.0)) {
      throw Error(Errc::ConfigError, "exploit_fraction must lie in [0, 1]");
    }
  }
};

enum class SelectionMode { Forced, All, Central, Explore, Exploit };

struct Selection {
  std::set<RobotId> partners;
  SelectionMode mode = SelectionMode::All;
};

namespace detail {

inline RobotId best_mean(const std::vector<RobotId>& others,
                         const std::map<RobotId, Belief>& beliefs) {
  std::optional<RobotId> best;
  double best_mean = 0.0;
  for (RobotId r : others) {
    auto it = beliefs.find(r);
    if (it == beliefs.end() || !it->second.initialized()) continue;
    if (!best || it->second.mean > best_mean) {
      best = r;
      best_mean = it->second.mean;
    }
  }
  return best ? *best : others.front();
}

}  // namespace detail

/// Trading partners for this opportunity. Bandit strategies first visit every
/// seller they hold no belief about, smallest id first.
inline Selection select_partners_detailed(const TradingStrategy& strategy,
                                          const std::map<RobotId, Belief>& beliefs, RobotId self,
                                          const std::set<RobotId>& team, Rng& rng) {
  std::vector<RobotId> others;
  for (RobotId r : team)
    if (r != self) others.push_back(r);
  if (others.empty()) throw Error(Errc::ConfigError, "team needs at least two members");
  Selection s;
  switch (strategy.kind) {
    case StrategyKind::All:
      s.partners.insert(others.begin(), others.end());
      s.mode = SelectionMode::All;
      return s;
    case StrategyKind::Central:
      if (self == strategy.central_id) {
        s.partners.insert(others.begin(), others.end());
      } else {
        s.partners.insert(strategy.central_id);
      }
      s.mode = SelectionMode::Central;
      return s;
    default: break;
  }
  for (RobotId r : others) {
    auto it = beliefs.find(r);
    if (it == beliefs.end() || !it->second.initialized()) {
      s.partners.insert(r);
      s.mode = SelectionMode::Forced;
      return s;
    }
  }
  bool exploit = strategy.kind == StrategyKind::BanditExploit;
  if (strategy.kind == StrategyKind::BanditExploreExploit) {
    exploit = rng.uniform() < strategy.exploit_fraction;
  }
  if (exploit) {
    s.partners.insert(detail::best_mean(others, beliefs));
    s.mode = SelectionMode::Exploit;
  } else {
    s.partners.insert(others[rng.below(others.size())]);
    s.mode = SelectionMode::Explore;
  }
  return s;
}

inline std::set<RobotId> select_partners(const TradingStrategy& strategy,
                                         const std::map<RobotId, Belief>& beliefs, RobotId self,
                                         const std::set<RobotId>& team, Rng& rng) {
  return select_partners_detailed(strategy, beliefs, self, team, rng).partners;
}

}  // namespace expmarket
