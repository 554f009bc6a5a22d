#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expmarket/catalogue.hpp"
#include "expmarket/integrity.hpp"
#include "expmarket/market.hpp"
#include "expmarket/sim/fsm.hpp"
#include "expmarket/sim/network.hpp"
#include "expmarket/sim/world.hpp"

namespace expmarket::sim {

using json = nlohmann::json;

struct StrategyConfig {
  std::string name;
  bool trading = true;  // false: the no-trade baseline
  TradingStrategy trading_strategy;
  ShoppingStrategy shopping;
};

struct NetworkConfig {
  std::uint64_t latency_low_ms = 50;
  std::uint64_t latency_high_ms = 500;
  std::size_t bytes_per_node = 512;
  std::size_t sample_max_nodes = 8;
  std::size_t offer_bytes = 16;
  std::size_t advert_bytes = 8;
};

struct ScenarioConfig {
  std::string catalogue_path;
  Catalogue catalogue;
  WorldConfig world;
  std::vector<std::size_t> robots{4};
  double route_length = 100.0;
  ChoiceKind gamma = ChoiceKind::Inliers;
  CommutationKind commutation = CommutationKind::Match;
  std::vector<double> sensor_quality{0.6, 0.9};
  std::vector<StrategyConfig> strategies;
  NetworkConfig network;
  LocaliserConfig localiser;
  std::size_t epochs = 10;
  std::size_t trials = 5;
  json echo;

  double quality_of(std::size_t robot) const { return sensor_quality[robot % sensor_quality.size()]; }

  CommutationPolicy policy() const {
    CommutationPolicy p;
    p.kind = commutation;
    p.choice.kind = gamma;
    p.localiser = localiser;
    return p;
  }
};

namespace detail {

// Walks a JSON object, remembering which keys were consumed so that leftovers
// can be reported as unknown.
inline bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_number()) fail(where(key), "expected a number");
    return v.get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!is_count(v)) fail(where(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_boolean()) fail(where(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const auto& v = raw(key);
    if (!v.is_string()) fail(where(key), "expected a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, v] : j_.items())
      if (!seen_.count(key)) fail(where(key), "unknown key");
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw Error(Errc::ConfigError, path + ": " + msg);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline ChoiceKind parse_gamma(const std::string& s, const std::string& where) {
  for (auto k : {ChoiceKind::Inliers, ChoiceKind::Fabmap, ChoiceKind::PathMemory})
    if (s == to_string(k)) return k;
  Fields::fail(where, "expected one of inliers, fabmap, path-memory");
}

}  // namespace detail

/// Builds a scenario from its JSON document. Relative catalogue paths are
/// resolved against `base_dir`.
inline ScenarioConfig parse_scenario(const json& doc, const std::filesystem::path& base_dir) {
  using detail::Fields;
  ScenarioConfig cfg;
  cfg.echo = doc;
  Fields top(doc, "");
  for (const char* required : {"world", "team", "strategies"})
    if (!top.has(required)) Fields::fail(required, "missing section");

  {
    Fields w(top.raw("world"), "world");
    if (!w.has("catalogue")) Fields::fail("world.catalogue", "missing");
    std::filesystem::path p = w.text("catalogue", "");
    if (p.is_relative()) p = base_dir / p;
    cfg.catalogue_path = p.lexically_normal().string();
    try {
      cfg.catalogue = load_catalogue(cfg.catalogue_path);
    } catch (const Error& e) {
      Fields::fail("world.catalogue", e.what());
    }
    cfg.catalogue.cyclic = w.flag("cyclic", false);
    cfg.world.spacing = w.number("spacing", cfg.world.spacing);
    cfg.world.dim = w.count("dim", cfg.world.dim);
    cfg.world.latent_scale = w.number("latent_scale", cfg.world.latent_scale);
    cfg.world.drift_sigma = w.number("drift_sigma", cfg.world.drift_sigma);
    cfg.world.noise_sigma = w.number("noise_sigma", cfg.world.noise_sigma);
    w.finish();
    try {
      cfg.world.validate();
    } catch (const Error& e) {
      Fields::fail("world", e.what());
    }
  }
  {
    Fields t(top.raw("team"), "team");
    if (t.has("robots")) {
      const auto& r = t.raw("robots");
      cfg.robots.clear();
      if (detail::is_count(r)) {
        cfg.robots.push_back(r.get<std::size_t>());
      } else if (r.is_array() && !r.empty()) {
        for (const auto& x : r) {
          if (!detail::is_count(x)) Fields::fail("team.robots", "expected integers");
          cfg.robots.push_back(x.get<std::size_t>());
        }
      } else {
        Fields::fail("team.robots", "expected an integer or a non-empty list");
      }
      for (auto n : cfg.robots)
        if (n < 2) Fields::fail("team.robots", "team size must be >= 2");
    }
    cfg.route_length = t.number("route_length", cfg.route_length);
    if (!(cfg.route_length > 0.0)) Fields::fail("team.route_length", "must be > 0");
    cfg.gamma = detail::parse_gamma(t.text("gamma", "inliers"), "team.gamma");
    const auto comm = t.text("commutation", "match");
    if (comm == "union") cfg.commutation = CommutationKind::Union;
    else if (comm == "match") cfg.commutation = CommutationKind::Match;
    else Fields::fail("team.commutation", "expected union or match");
    if (t.has("sensor_quality")) {
      const auto& q = t.raw("sensor_quality");
      if (!q.is_array() || q.empty()) Fields::fail("team.sensor_quality", "expected a non-empty list");
      cfg.sensor_quality.clear();
      for (const auto& x : q) {
        if (!x.is_number() || x.get<double>() <= 0.0 || x.get<double>() > 1.0)
          Fields::fail("team.sensor_quality", "values must lie in (0, 1]");
        cfg.sensor_quality.push_back(x.get<double>());
      }
    }
    t.finish();
  }
  {
    const auto& list = top.raw("strategies");
    if (!list.is_array() || list.empty()) Fields::fail("strategies", "expected a non-empty list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "strategies[" + std::to_string(i) + "]";
      Fields s(list[i], path);
      StrategyConfig sc;
      sc.name = s.text("name", "");
      if (sc.name.empty()) Fields::fail(path + ".name", "missing");
      if (sc.name.find_first_of("/\\ ") != std::string::npos)
        Fields::fail(path + ".name", "must not contain spaces or slashes");
      if (!names.insert(sc.name).second) Fields::fail(path + ".name", "duplicate name " + sc.name);
      const auto trading = s.text("trading", "ALL");
      if (trading == "none") {
        sc.trading = false;
      } else if (auto k = parse_strategy_kind(trading)) {
        sc.trading_strategy.kind = *k;
      } else {
        Fields::fail(path + ".trading",
                     "expected none, ALL, BANDIT_EXPLORE, BANDIT_EXPLOIT, BANDIT_EXPLORE_EXPLOIT or CENTRAL");
      }
      sc.trading_strategy.exploit_fraction = s.number("exploit_fraction", 0.0);
      sc.trading_strategy.central_id = static_cast<RobotId>(s.count("central", 0));
      const auto shopping = s.text("shopping", "CURRENT");
      if (auto k = parse_shopping_kind(shopping)) sc.shopping.kind = *k;
      else Fields::fail(path + ".shopping", "expected CURRENT, WINDOW or RECOMMEND");
      sc.shopping.window_radius = static_cast<std::uint32_t>(s.count("window_radius", 1));
      s.finish();
      try {
        sc.trading_strategy.validate();
        sc.shopping.validate();
      } catch (const Error& e) {
        Fields::fail(path, e.what());
      }
      for (auto n : cfg.robots)
        if (sc.trading_strategy.kind == StrategyKind::Central && sc.trading_strategy.central_id >= n)
          Fields::fail(path + ".central", "robot id outside the team");
      cfg.strategies.push_back(std::move(sc));
    }
  }
  if (top.has("network")) {
    Fields n(top.raw("network"), "network");
    cfg.network.latency_low_ms = n.count("latency_low_ms", cfg.network.latency_low_ms);
    cfg.network.latency_high_ms = n.count("latency_high_ms", cfg.network.latency_high_ms);
    cfg.network.bytes_per_node = n.count("bytes_per_node", cfg.network.bytes_per_node);
    cfg.network.sample_max_nodes = n.count("sample_max_nodes", cfg.network.sample_max_nodes);
    cfg.network.offer_bytes = n.count("offer_bytes", cfg.network.offer_bytes);
    cfg.network.advert_bytes = n.count("advert_bytes", cfg.network.advert_bytes);
    n.finish();
    if (cfg.network.latency_high_ms < cfg.network.latency_low_ms)
      Fields::fail("network.latency_high_ms", "must be >= latency_low_ms");
    if (cfg.network.sample_max_nodes < 1) Fields::fail("network.sample_max_nodes", "must be >= 1");
  }
  if (top.has("localiser")) {
    Fields l(top.raw("localiser"), "localiser");
    cfg.localiser.tau_loc = l.number("tau_loc", cfg.localiser.tau_loc);
    cfg.localiser.tau_match = l.number("tau_match", cfg.localiser.tau_match);
    cfg.localiser.seed_k = l.count("seed_k", cfg.localiser.seed_k);
    cfg.localiser.depth = l.count("depth", cfg.localiser.depth);
    l.finish();
    try {
      cfg.localiser.validate();
    } catch (const Error& e) {
      Fields::fail("localiser", e.what());
    }
  }
  if (top.has("sim")) {
    Fields s(top.raw("sim"), "sim");
    cfg.epochs = s.count("epochs", cfg.epochs);
    cfg.trials = s.count("trials", cfg.trials);
    s.finish();
    if (cfg.epochs < 1) Fields::fail("sim.epochs", "must be >= 1");
    if (cfg.trials < 1) Fields::fail("sim.trials", "must be >= 1");
  }
  top.finish();
  return cfg;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, path + ": " + e.what());
  }
  try {
    return parse_scenario(doc, std::filesystem::path(path).parent_path());
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trial execution

struct DropoutRecord {
  std::size_t epoch;
  RobotId robot;
  double metres;
};

struct TradeRecord {
  std::size_t epoch;
  RobotId buyer;
  RobotId seller;
  std::size_t nodes_in;
  std::size_t nodes_out;
  std::size_t nodes_deleted;
  std::size_t matches;
  std::size_t bytes;
  double value;
};

struct BeliefRecord {
  std::size_t epoch;
  RobotId robot;
  RobotId seller;
  Belief belief;
};

struct TrialMetrics {
  std::size_t robots = 0;
  std::vector<DropoutRecord> dropouts;
  std::vector<std::uint64_t> bytes_sent, bytes_received, query_bytes, match_ops;
  std::vector<std::vector<std::size_t>> map_sizes;  // [epoch][robot]
  std::vector<TradeRecord> trades;
  std::vector<BeliefRecord> beliefs;
  std::uint64_t clock_ms = 0;
  double route_metres = 0.0;  // per robot

  std::vector<double> dropout_values() const {
    std::vector<double> v;
    for (const auto& d : dropouts) v.push_back(d.metres);
    return v;
  }
};

struct RobotState {
  Repository repo;
  AgentFsm fsm;
  NodeIdGenerator ids{0, 0};
  double position = 0.0;
  ProductIndex current;
  Patch new_content;
  std::map<RobotId, Belief> beliefs;
  ProductBeliefs product_beliefs;
  ProductLedger ledger;
  Advisories advisories;
};

namespace detail {

inline void step_team(std::vector<RobotState>& team, NetworkModel& net) {
  std::vector<FsmState> states;
  for (auto& r : team) states.push_back(r.fsm.advance());
  if (barrier_sync(states) != BarrierResult::Proceed) {
    throw Error(Errc::DesyncDetected, "team failed to agree at a barrier");
  }
  net.settle();
}

inline Patch supply_for(const Graph& seller, const std::set<ProductIndex>& list, const Patch& sample) {
  Graph g;
  {
    auto ed = g.edit();
    for (const auto& [id, n] : seller.nodes())
      if (list.count(n.product) && !sample.elements.count(id)) ed.insert_node(n);
  }
  return make_patch(Graph{}, g);
}

}  // namespace detail

/// One seeded run of `strategy` with a team of `robots`.
inline TrialMetrics run_trial(const ScenarioConfig& cfg, const StrategyConfig& strategy,
                              std::size_t robots, std::uint64_t seed, std::size_t trial) {
  const World world(cfg.catalogue, cfg.world, cfg.epochs, derive_seed(seed, trial, 1));
  const CommutationPolicy policy = cfg.policy();
  const ChoicePolicy gamma{cfg.gamma, nullptr};
  const SamplingBudget budget{cfg.network.sample_max_nodes, cfg.network.bytes_per_node};
  NetworkModel net(cfg.network.latency_low_ms, cfg.network.latency_high_ms, robots);
  Rng net_rng(derive_seed(seed, trial, 4));

  TrialMetrics m;
  m.robots = robots;
  m.bytes_sent.assign(robots, 0);
  m.bytes_received.assign(robots, 0);
  m.query_bytes.assign(robots, 0);
  m.match_ops.assign(robots, 0);
  m.route_metres = cfg.route_length * static_cast<double>(cfg.epochs);

  std::vector<RobotState> team(robots);
  std::set<RobotId> ids;
  Rng start_rng(derive_seed(seed, trial, 2));
  for (std::size_t r = 0; r < robots; ++r) {
    team[r].ids = NodeIdGenerator(derive_seed(seed, trial, 100 + r), static_cast<RobotId>(r));
    const auto bucket = start_rng.below(world.buckets());
    team[r].position = static_cast<double>(bucket) * cfg.world.spacing;
    ids.insert(static_cast<RobotId>(r));
  }
  std::vector<Rng> pick_rng;
  for (std::size_t r = 0; r < robots; ++r) pick_rng.emplace_back(derive_seed(seed, trial, 200 + r));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto k = static_cast<std::uint32_t>(epoch);

    detail::step_team(team, net);  // MAPPING
    for (std::size_t r = 0; r < robots; ++r) {
      auto& st = team[r];
      Rng obs_rng(derive_seed(derive_seed(seed, trial, 3), r, epoch));
      const auto obs = drive(world, st.position, cfg.route_length, epoch, cfg.quality_of(r), obs_rng);
      OpCounter ops;
      auto res = run_foray(st.repo, obs, static_cast<RobotId>(r), k, cfg.localiser,
                           cfg.world.spacing, st.ids, &ops);
      m.match_ops[r] += ops.count;
      for (double x : res.dropouts) m.dropouts.push_back({epoch, static_cast<RobotId>(r), x});
      st.new_content = std::move(res.patch);
      st.current = obs.empty() ? product_of(world.wrap(st.position), cfg.catalogue) : obs.back().product;
      st.position = world.wrap(st.position + cfg.route_length);
    }

    detail::step_team(team, net);  // SAMPLING
    std::vector<Patch> samples(robots);
    std::vector<std::set<ProductIndex>> lists(robots);
    std::vector<Selection> partners(robots);
    if (strategy.trading) {
      for (std::size_t r = 0; r < robots; ++r) {
        auto& st = team[r];
        samples[r] = sample_for_query(st.new_content, budget, gamma);
        lists[r] = shopping_list(strategy.shopping, st.current, cfg.catalogue, st.advisories);
        partners[r] = select_partners_detailed(strategy.trading_strategy, st.beliefs,
                                               static_cast<RobotId>(r), ids, pick_rng[r]);
        const std::uint64_t qbytes = budget.bytes_for(samples[r]) + 4 * lists[r].size();
        for (RobotId j : partners[r].partners) {
          net.deliver(static_cast<RobotId>(r), j, qbytes, net_rng);
          m.query_bytes[r] += qbytes;
        }
      }
    }

    detail::step_team(team, net);  // TENDERING
    std::vector<std::map<RobotId, double>> offers(robots);
    if (strategy.trading) {
      for (std::size_t r = 0; r < robots; ++r) {
        for (RobotId j : partners[r].partners) {
          const Patch supply = detail::supply_for(team[j].repo.graph, lists[r], samples[r]);
          if (supply.insert_count() == 0) continue;
          offers[r][j] = price_patch(supply, gamma);
          net.deliver(j, static_cast<RobotId>(r), cfg.network.offer_bytes, net_rng);
        }
      }
    }

    detail::step_team(team, net);  // PURCHASING
    if (strategy.trading) {
      for (std::size_t r = 0; r < robots; ++r) {
        auto& buyer = team[r];
        std::vector<RobotId> order = rank_offers(offers[r], buyer.beliefs);
        for (RobotId j : partners[r].partners)
          if (!offers[r].count(j)) order.push_back(j);
        for (RobotId j : order) {
          auto& seller = team[j];
          const auto stats = trade_merge_inplace(buyer.repo, seller.repo, policy,
                                                 TradeScope{lists[r]});
          const auto bpn = cfg.network.bytes_per_node;
          if (stats.nodes_in) net.deliver(j, static_cast<RobotId>(r), stats.nodes_in * bpn, net_rng);
          if (stats.nodes_out) net.deliver(static_cast<RobotId>(r), j, stats.nodes_out * bpn, net_rng);
          m.match_ops[r] += stats.left_match_ops;
          m.match_ops[j] += stats.right_match_ops;

          const double value = stats.left_patch.insert_count() ? price_patch(stats.left_patch, gamma) : 0.0;
          Measurement meas{j, epoch, value, {}};
          std::map<ProductIndex, std::pair<double, std::size_t>> by_product;
          for (const Node* n : stats.left_patch.inserted_nodes()) {
            meas.patch_node_ids.insert(n->id);
            auto& acc = by_product[n->product];
            acc.first += gamma_score(*n, gamma);
            acc.second += 1;
          }
          auto& b = buyer.beliefs.try_emplace(j, Belief{j}).first->second;
          b = update_belief(b, meas);
          for (const auto& [p, acc] : by_product) {
            auto& pb = buyer.product_beliefs[p].try_emplace(j, Belief{j}).first->second;
            pb = update_belief(pb, Measurement{j, epoch, acc.first / static_cast<double>(acc.second), {}});
          }
          buyer.ledger = record_trade(buyer.ledger, stats.left_patch, TradeDirection::Bought);
          seller.ledger = record_trade(seller.ledger, stats.left_patch, TradeDirection::Sold);
          seller.ledger = record_trade(seller.ledger, stats.right_patch, TradeDirection::Bought);
          buyer.ledger = record_trade(buyer.ledger, stats.right_patch, TradeDirection::Sold);
          m.trades.push_back(TradeRecord{epoch, static_cast<RobotId>(r), j, stats.nodes_in,
                                         stats.nodes_out, stats.nodes_deleted, stats.matches,
                                         (stats.nodes_in + stats.nodes_out) * bpn, value});
        }
      }
    }

    detail::step_team(team, net);  // MERGING
    for (auto& st : team) st.ledger.sync_wares(st.repo.graph);
    if (strategy.trading && strategy.shopping.kind == ShoppingKind::Recommend) {
      for (std::size_t r = 0; r < robots; ++r) {
        const auto best = advertise(team[r].ledger);
        for (std::size_t j = 0; j < robots; ++j) {
          if (j == r) continue;
          net.deliver(static_cast<RobotId>(r), static_cast<RobotId>(j), cfg.network.advert_bytes, net_rng);
          if (best) team[j].advisories.best_selling[static_cast<RobotId>(r)] = *best;
          else team[j].advisories.best_selling.erase(static_cast<RobotId>(r));
        }
      }
      for (auto& st : team) {
        st.advisories.favourite_seller.clear();
        for (std::size_t p = 0; p < cfg.catalogue.size(); ++p) {
          const ProductIndex pi{static_cast<std::uint32_t>(p)};
          if (auto fav = advise(st.product_beliefs, pi)) st.advisories.favourite_seller[pi] = *fav;
        }
      }
    }

    detail::step_team(team, net);  // IDLE
    std::vector<std::size_t> sizes;
    for (std::size_t r = 0; r < robots; ++r) {
      sizes.push_back(team[r].repo.graph.node_count());
      for (const auto& [seller, b] : team[r].beliefs)
        m.beliefs.push_back({epoch, static_cast<RobotId>(r), seller, b});
    }
    m.map_sizes.push_back(std::move(sizes));
  }
  m.bytes_sent = net.bytes_sent();
  m.bytes_received = net.bytes_received();
  m.clock_ms = net.clock();
  return m;
}

struct Variant {
  std::string name;
  const StrategyConfig* strategy = nullptr;
  std::size_t robots = 0;
  std::vector<TrialMetrics> trials;
};

struct ScenarioResult {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::vector<Variant> variants;

  const Variant& variant(const std::string& name) const {
    for (const auto& v : variants)
      if (v.name == name) return v;
    throw Error(Errc::ConfigError, "no variant " + name);
  }
};

/// Every strategy at every team size, `trials` seeded trials each. Trials of
/// different variants share seeds, so they see the same world and routes.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg, std::uint64_t seed,
                                   std::optional<std::size_t> trials = std::nullopt,
                                   unsigned jobs = 1) {
  ScenarioResult res;
  res.seed = seed;
  res.trials = trials.value_or(cfg.trials);
  if (res.trials < 1) throw Error(Errc::ConfigError, "trials must be >= 1");
  for (const auto& s : cfg.strategies) {
    for (auto n : cfg.robots) {
      Variant v;
      v.name = cfg.robots.size() > 1 ? s.name + "_R" + std::to_string(n) : s.name;
      v.strategy = &s;
      v.robots = n;
      v.trials.resize(res.trials);
      res.variants.push_back(std::move(v));
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t v = 0; v < res.variants.size(); ++v)
    for (std::size_t t = 0; t < res.trials; ++t) tasks.emplace_back(v, t);
  auto run_task = [&](std::size_t i) {
    auto& v = res.variants[tasks[i].first];
    v.trials[tasks[i].second] = run_trial(cfg, *v.strategy, v.robots, seed, tasks[i].second);
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tasks.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    return res;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::future<void>> workers;
  for (unsigned w = 0; w < jobs; ++w) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          run_task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    }));
  }
  for (auto& w : workers) w.get();
  if (failure) std::rethrow_exception(failure);
  return res;
}

// ---------------------------------------------------------------------------
// Summaries and output

struct TrialSummary {
  std::size_t dropout_events = 0;
  double dropout_total_m = 0.0;
  double dropout_mean_m = 0.0;
  double dropout_max_m = 0.0;
  double bytes_sent_per_robot = 0.0;
  double bytes_received_per_robot = 0.0;
  double query_bytes_per_robot = 0.0;
  double match_ops_per_robot = 0.0;
  double final_map_nodes = 0.0;
  std::size_t trades = 0;
};

inline TrialSummary summarise(const TrialMetrics& m) {
  TrialSummary s;
  for (const auto& d : m.dropouts) {
    ++s.dropout_events;
    s.dropout_total_m += d.metres;
    s.dropout_max_m = std::max(s.dropout_max_m, d.metres);
  }
  if (s.dropout_events) s.dropout_mean_m = s.dropout_total_m / static_cast<double>(s.dropout_events);
  const double n = static_cast<double>(m.robots);
  for (std::size_t r = 0; r < m.robots; ++r) {
    s.bytes_sent_per_robot += static_cast<double>(m.bytes_sent[r]) / n;
    s.bytes_received_per_robot += static_cast<double>(m.bytes_received[r]) / n;
    s.query_bytes_per_robot += static_cast<double>(m.query_bytes[r]) / n;
    s.match_ops_per_robot += static_cast<double>(m.match_ops[r]) / n;
  }
  if (!m.map_sizes.empty()) {
    for (auto x : m.map_sizes.back()) s.final_map_nodes += static_cast<double>(x) / n;
  }
  s.trades = m.trades.size();
  return s;
}

inline std::vector<std::pair<std::string, double>> summary_fields(const TrialSummary& s) {
  return {{"dropout_events", static_cast<double>(s.dropout_events)},
          {"dropout_total_m", s.dropout_total_m},
          {"dropout_mean_m", s.dropout_mean_m},
          {"dropout_max_m", s.dropout_max_m},
          {"bytes_sent_per_robot", s.bytes_sent_per_robot},
          {"bytes_received_per_robot", s.bytes_received_per_robot},
          {"query_bytes_per_robot", s.query_bytes_per_robot},
          {"match_ops_per_robot", s.match_ops_per_robot},
          {"final_map_nodes", s.final_map_nodes},
          {"trades", static_cast<double>(s.trades)}};
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

inline void write_trial(const std::filesystem::path& dir, const TrialMetrics& m) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw Error(Errc::ConfigError, "cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("dropouts.csv");
    f << "epoch,robot,metres\n";
    for (const auto& d : m.dropouts) f << d.epoch << ',' << d.robot << ',' << format_double(d.metres) << '\n';
  }
  {
    auto f = open("bytes.csv");
    f << "robot,bytes_sent,bytes_received,query_bytes,match_ops\n";
    for (std::size_t r = 0; r < m.robots; ++r)
      f << r << ',' << m.bytes_sent[r] << ',' << m.bytes_received[r] << ',' << m.query_bytes[r] << ','
        << m.match_ops[r] << '\n';
  }
  {
    auto f = open("map_sizes.csv");
    f << "k,robot,nodes\n";
    for (std::size_t k = 0; k < m.map_sizes.size(); ++k)
      for (std::size_t r = 0; r < m.map_sizes[k].size(); ++r)
        f << k + 1 << ',' << r << ',' << m.map_sizes[k][r] << '\n';
  }
  {
    auto f = open("trades.csv");
    f << "k,buyer,seller,nodes_in,nodes_out,nodes_deleted,matches,bytes,value\n";
    for (const auto& t : m.trades)
      f << t.epoch << ',' << t.buyer << ',' << t.seller << ',' << t.nodes_in << ',' << t.nodes_out << ','
        << t.nodes_deleted << ',' << t.matches << ',' << t.bytes << ',' << format_double(t.value) << '\n';
  }
  {
    auto f = open("beliefs.csv");
    f << "k,robot,seller,count,mean,variance\n";
    for (const auto& b : m.beliefs)
      f << b.epoch << ',' << b.robot << ',' << b.seller << ',' << b.belief.count << ','
        << format_double(b.belief.mean) << ',' << format_double(b.belief.variance()) << '\n';
  }
}

/// Writes <out>/<variant>/trial_<i>/*.csv, <out>/<variant>/aggregate.csv and
/// <out>/summary.json.
inline void write_scenario(const std::filesystem::path& out, const ScenarioConfig& cfg,
                           const ScenarioResult& res) {
  std::filesystem::create_directories(out);
  json summary;
  summary["seed"] = res.seed;
  summary["trials"] = res.trials;
  summary["config"] = cfg.echo;
  summary["variants"] = json::array();
  for (const auto& v : res.variants) {
    const auto vdir = out / v.name;
    std::map<std::string, std::vector<double>> cols;
    std::vector<std::string> order;
    for (std::size_t t = 0; t < v.trials.size(); ++t) {
      write_trial(vdir / ("trial_" + std::to_string(t)), v.trials[t]);
      for (const auto& [k, x] : summary_fields(summarise(v.trials[t]))) {
        if (!cols.count(k)) order.push_back(k);
        cols[k].push_back(x);
      }
    }
    std::ofstream agg(vdir / "aggregate.csv", std::ios::binary);
    agg << "metric,mean,std\n";
    json jv;
    jv["name"] = v.name;
    jv["strategy"] = v.strategy->name;
    jv["robots"] = v.robots;
    for (const auto& k : order) {
      const auto ms = mean_std(cols[k]);
      agg << k << ',' << format_double(ms.mean) << ',' << format_double(ms.std) << '\n';
      jv["aggregate"][k] = {{"mean", ms.mean}, {"std", ms.std}};
    }
    summary["variants"].push_back(jv);
  }
  std::ofstream f(out / "summary.json", std::ios::binary);
  f << summary.dump(2) << '\n';
}

}  // namespace expmarket::sim
