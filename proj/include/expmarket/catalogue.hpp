#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "expmarket/experience.hpp"
#include "expmarket/market.hpp"

namespace expmarket {

struct Section {
  std::string name;
  std::string category;
  std::uint32_t stock_items = 1;
  double metres = 1.0;
};

/// Ordered sections of drivable world; a position along the route falls in
/// exactly one of them.
struct Catalogue {
  std::vector<Section> sections;
  bool cyclic = false;

  std::size_t size() const { return sections.size(); }

  double length() const {
    double total = 0.0;
    for (const auto& s : sections) total += s.metres;
    return total;
  }

  /// Start offset of section `i` along the route.
  double start_of(std::size_t i) const {
    double total = 0.0;
    for (std::size_t j = 0; j < i && j < sections.size(); ++j) total += sections[j].metres;
    return total;
  }

  void validate() const {
    if (sections.empty()) throw Error(Errc::ConfigError, "catalogue has no sections");
    for (std::size_t i = 0; i < sections.size(); ++i) {
      const auto& s = sections[i];
      if (s.stock_items < 1) {
        throw Error(Errc::ConfigError, "section " + s.name + ": stock_items must be >= 1");
      }
      if (!(s.metres > 0.0)) throw Error(Errc::ConfigError, "section " + s.name + ": metres must be > 0");
    }
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Parses `name,category,stock_items,metres` lines. Blank lines and lines
/// starting with '#' are skipped, as is a leading header row.
inline Catalogue parse_catalogue(std::istream& in, const std::string& origin = "catalogue") {
  Catalogue c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto f = detail::split_csv(t);
    if (c.sections.empty() && f.size() == 4 && f[0] == "name") continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (f.size() != 4) throw Error(Errc::ParseError, where + ": expected 4 fields");
    Section s;
    s.name = f[0];
    s.category = f[1];
    try {
      const auto items = parse_uint(f[2]);
      if (items > 0xffffffffULL) throw Error(Errc::ParseError, "too large");
      s.stock_items = static_cast<std::uint32_t>(items);
      s.metres = parse_double(f[3]);
    } catch (const Error& e) {
      throw Error(Errc::ParseError, where + ": " + e.what());
    }
    c.sections.push_back(std::move(s));
  }
  c.validate();
  return c;
}

inline Catalogue load_catalogue(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open catalogue " + path);
  return parse_catalogue(in, path);
}

/// Section containing route position `position` (metres from the origin).
inline ProductIndex product_of(double position, const Catalogue& c) {
  if (!(position >= 0.0)) throw Error(Errc::OutOfWorld, "position " + format_double(position));
  double end = 0.0;
  for (std::size_t i = 0; i < c.sections.size(); ++i) {
    end += c.sections[i].metres;
    if (position < end) return ProductIndex{static_cast<std::uint32_t>(i)};
  }
  throw Error(Errc::OutOfWorld, "position " + format_double(position) + " beyond " + format_double(end));
}

inline ProductIndex product_of(const Observation& obs, const Catalogue& c) {
  return product_of(obs.position, c);
}

enum class ShoppingKind { Current, Window, Recommend };

inline const char* to_string(ShoppingKind k) {
  switch (k) {
    case ShoppingKind::Current: return "CURRENT";
    case ShoppingKind::Window: return "WINDOW";
    case ShoppingKind::Recommend: return "RECOMMEND";
  }
  return "?";
}

inline std::optional<ShoppingKind> parse_shopping_kind(std::string_view s) {
  for (auto k : {ShoppingKind::Current, ShoppingKind::Window, ShoppingKind::Recommend})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

struct ShoppingStrategy {
  ShoppingKind kind = ShoppingKind::Current;
  std::uint32_t window_radius = 1;

  void validate() const {
    if (kind != ShoppingKind::Current && window_radius < 1) {
      throw Error(Errc::ConfigError, "window_radius must be >= 1");
    }
  }
};

/// What the rest of the team has told this agent.
struct Advisories {
  std::map<ProductIndex, RobotId> favourite_seller;  // per product, from advise()
  std::map<RobotId, ProductIndex> best_selling;      // advertised by each seller
};

inline std::set<ProductIndex> shopping_list(const ShoppingStrategy& s, ProductIndex current,
                                            const Catalogue& c, const Advisories& adv = {}) {
  std::set<ProductIndex> out;
  if (s.kind == ShoppingKind::Current) {
    out.insert(current);
    return out;
  }
  const auto n = static_cast<std::int64_t>(c.size());
  const auto r = static_cast<std::int64_t>(s.window_radius);
  for (std::int64_t d = -r; d <= r; ++d) {
    std::int64_t p = static_cast<std::int64_t>(current.value) + d;
    if (c.cyclic) {
      p = ((p % n) + n) % n;
    } else if (p < 0 || p >= n) {
      continue;
    }
    out.insert(ProductIndex{static_cast<std::uint32_t>(p)});
  }
  if (s.kind == ShoppingKind::Recommend) {
    auto fav = adv.favourite_seller.find(current);
    if (fav != adv.favourite_seller.end()) {
      auto best = adv.best_selling.find(fav->second);
      if (best != adv.best_selling.end()) out.insert(best->second);
    }
  }
  return out;
}

/// Per-product record of held, bought and sold nodes.
struct ProductLedger {
  std::map<ProductIndex, std::set<NodeId>> wares;
  std::map<ProductIndex, std::set<NodeId>> purchases;
  std::map<ProductIndex, std::set<NodeId>> sales;

  bool purchased(const NodeId& id) const {
    for (const auto& [p, ids] : purchases)
      if (ids.count(id)) return true;
    return false;
  }

  /// Rebuilds wares from the current map.
  void sync_wares(const Graph& g) {
    wares.clear();
    for (const auto& [id, n] : g.nodes()) wares[n.product].insert(id);
  }
};

enum class TradeDirection { Bought, Sold };

inline ProductLedger record_trade(ProductLedger ledger, const Patch& patch, TradeDirection dir) {
  for (const Node* n : patch.inserted_nodes()) {
    if (dir == TradeDirection::Bought) {
      ledger.purchases[n->product].insert(n->id);
      ledger.wares[n->product].insert(n->id);
    } else if (!ledger.purchased(n->id)) {
      ledger.sales[n->product].insert(n->id);
    }
  }
  return ledger;
}

/// The product with the most sales, ties to the smallest index.
inline std::optional<ProductIndex> advertise(const ProductLedger& ledger) {
  std::optional<ProductIndex> best;
  std::size_t best_n = 0;
  for (const auto& [p, ids] : ledger.sales) {
    if (ids.size() > best_n) {
      best = p;
      best_n = ids.size();
    }
  }
  return best;
}

using ProductBeliefs = std::map<ProductIndex, std::map<RobotId, Belief>>;

/// The seller with the highest mean belief for product `p`.
inline std::optional<RobotId> advise(const ProductBeliefs& beliefs, ProductIndex p) {
  auto it = beliefs.find(p);
  if (it == beliefs.end()) return std::nullopt;
  std::optional<RobotId> best;
  double best_mean = 0.0;
  for (const auto& [seller, b] : it->second) {
    if (!b.initialized()) continue;
    if (!best || b.mean > best_mean) {
      best = seller;
      best_mean = b.mean;
    }
  }
  return best;
}

/// Product-level belief when one exists, else the seller-level belief.
inline Belief belief_for(const ProductBeliefs& per_product, const std::map<RobotId, Belief>& per_seller,
                         RobotId seller, ProductIndex p) {
  if (auto it = per_product.find(p); it != per_product.end()) {
    if (auto jt = it->second.find(seller); jt != it->second.end() && jt->second.initialized()) {
      return jt->second;
    }
  }
  if (auto it = per_seller.find(seller); it != per_seller.end()) return it->second;
  return Belief{seller};
}

}  // namespace expmarket
