#pragma once

#include <cmath>
#include <vector>

#include "expmarket/catalogue.hpp"
#include "expmarket/experience.hpp"

namespace expmarket::sim {

struct WorldConfig {
  double spacing = 5.0;        // metres between observations
  std::size_t dim = 16;        // descriptor dimension
  double latent_scale = 1.0;   // spread of the per-place base descriptor
  double drift_sigma = 0.05;   // per-epoch random-walk step of each section's offset
  double noise_sigma = 0.03;   // per-observation descriptor noise

  void validate() const {
    if (!(spacing > 0.0)) throw Error(Errc::ConfigError, "world.spacing must be > 0");
    if (dim < 1) throw Error(Errc::ConfigError, "world.dim must be >= 1");
    for (double v : {latent_scale, drift_sigma, noise_sigma}) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(Errc::ConfigError, "world noise scales must be finite and >= 0");
      }
    }
  }
};

/// Synthetic appearance field: a base descriptor per spacing-sized bucket
/// plus a drifting offset per catalogue section.
class World {
 public:
  World(Catalogue catalogue, WorldConfig cfg, std::size_t epochs, std::uint64_t seed)
      : catalogue_(std::move(catalogue)), cfg_(cfg) {
    catalogue_.validate();
    cfg_.validate();
    length_ = catalogue_.length();
    Rng rng(derive_seed(seed, 0x1a7e, 0));
    const auto buckets = static_cast<std::size_t>(std::ceil(length_ / cfg_.spacing));
    latent_.resize(buckets);
    for (auto& v : latent_) {
      v.resize(cfg_.dim);
      for (auto& x : v) x = rng.normal(0.0, cfg_.latent_scale);
    }
    Rng drift_rng(derive_seed(seed, 0xd1f7, 0));
    drift_.assign(catalogue_.size(), {});
    for (auto& per_section : drift_) {
      std::vector<double> cur(cfg_.dim, 0.0);
      per_section.push_back(cur);
      for (std::size_t t = 1; t <= epochs; ++t) {
        for (auto& x : cur) x += drift_rng.normal(0.0, cfg_.drift_sigma);
        per_section.push_back(cur);
      }
    }
  }

  const Catalogue& catalogue() const { return catalogue_; }
  const WorldConfig& config() const { return cfg_; }
  double length() const { return length_; }
  std::size_t buckets() const { return latent_.size(); }

  /// Wraps a route position into [0, length).
  double wrap(double position) const {
    double p = std::fmod(position, length_);
    if (p < 0.0) p += length_;
    return p;
  }

  /// Appearance of `position` at `epoch`, without sensor noise.
  std::vector<double> appearance(double position, std::size_t epoch) const {
    const double p = wrap(position);
    const auto bucket = std::min(static_cast<std::size_t>(p / cfg_.spacing), latent_.size() - 1);
    const auto section = product_of(p, catalogue_).value;
    const auto& d = drift_.at(section).at(std::min(epoch, drift_[section].size() - 1));
    std::vector<double> out = latent_[bucket];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += d[i];
    return out;
  }

  /// A noisy frame taken by a sensor of the given quality in (0, 1].
  Observation observe(double position, std::size_t epoch, double quality, Rng& rng) const {
    Observation o;
    o.position = wrap(position);
    o.descriptor = appearance(o.position, epoch);
    for (auto& x : o.descriptor) x += rng.normal(0.0, cfg_.noise_sigma);
    o.product = product_of(o.position, catalogue_);
    o.inliers = static_cast<std::uint64_t>(std::max(0.0, std::round(rng.normal(100.0 * quality, 10.0))));
    o.appearance_score = std::clamp(rng.normal(quality, 0.05), 0.0, 1.0);
    return o;
  }

 private:
  Catalogue catalogue_;
  WorldConfig cfg_;
  double length_ = 0.0;
  std::vector<std::vector<double>> latent_;
  std::vector<std::vector<std::vector<double>>> drift_;  // [section][epoch][dim]
};

/// One drive along the route: frames every `spacing` metres from `start`.
inline std::vector<Observation> drive(const World& w, double start, double route_length,
                                      std::size_t epoch, double quality, Rng& rng) {
  const double spacing = w.config().spacing;
  const auto n = static_cast<std::size_t>(std::llround(route_length / spacing));
  std::vector<Observation> obs;
  obs.reserve(n);
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = start + static_cast<double>(i) * spacing;
    Observation o = w.observe(raw, epoch, quality, rng);
    o.timestamp = static_cast<double>(epoch) * 3600.0 + static_cast<double>(i);
    const bool wrapped = i > 0 && o.position < prev;
    o.travelled = (i == 0 || (wrapped && !w.catalogue().cyclic)) ? 0.0 : spacing;
    prev = o.position;
    obs.push_back(std::move(o));
  }
  return obs;
}

struct ForayResult {
  Patch patch;
  std::vector<double> dropouts;  // metres travelled blind, one entry per outage
  std::size_t localised = 0;
};

/// Localises each frame against the robot's map, bumps path memory on the
/// nodes it localises against, records the rest as a patch, and reports the
/// blind stretches between successes.
inline ForayResult run_foray(Repository& repo, const std::vector<Observation>& obs,
                             RobotId robot, std::uint32_t foray, const LocaliserConfig& cfg,
                             double spacing, NodeIdGenerator& ids, OpCounter* ops = nullptr) {
  ForayResult out;
  const auto loc = localise_observations(repo.graph, obs, cfg, ops);
  double blind = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (i > 0 && obs[i].travelled == 0.0 && blind > 0.0) {
      out.dropouts.push_back(blind);
      blind = 0.0;
    }
    if (loc[i].ok()) {
      ++out.localised;
      if (blind > 0.0) out.dropouts.push_back(blind);
      blind = 0.0;
    } else {
      blind += spacing;
    }
  }
  if (blind > 0.0) out.dropouts.push_back(blind);
  out.patch = patch_from_localisations(repo.graph, obs, loc, robot, foray, ids);
  for (const auto& l : loc)
    if (l.ok()) repo.graph.touch(*l.node);
  repo.commit(out.patch);
  return out;
}

/// Normalised empirical complementary CDF at each distinct value, ascending x.
inline std::vector<std::pair<double, double>> failure_distribution(std::vector<double> dropouts) {
  std::vector<std::pair<double, double>> out;
  if (dropouts.empty()) return out;
  std::sort(dropouts.begin(), dropouts.end());
  const double n = static_cast<double>(dropouts.size());
  for (std::size_t i = 0; i < dropouts.size(); ++i) {
    if (i > 0 && dropouts[i] == dropouts[i - 1]) continue;
    out.emplace_back(dropouts[i], static_cast<double>(dropouts.size() - i) / n);
  }
  return out;
}

/// P(X >= x) read off a table from failure_distribution.
inline double ccdf_at(const std::vector<std::pair<double, double>>& table, double x) {
  for (const auto& [v, p] : table)
    if (v >= x) return p;
  return 0.0;
}

}  // namespace expmarket::sim
