#pragma once

#include <span>
#include <vector>

#include "expmarket/localiser.hpp"

namespace expmarket {

/// One frame seen on a foray. `position` is ground truth and only reaches the
/// map through the product label; `travelled` is the odometry since the
/// previous frame (0 for the first frame, or after a discontinuity).
struct Observation {
  std::vector<double> descriptor;
  double position = 0.0;
  double travelled = 0.0;
  double timestamp = 0.0;
  ProductIndex product;
  std::uint64_t inliers = 0;
  double appearance_score = 0.0;
};

inline std::vector<Localisation> localise_observations(const Graph& base,
                                                       std::span<const Observation> obs,
                                                       const LocaliserConfig& cfg,
                                                       OpCounter* ops = nullptr) {
  std::vector<Localisation> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(localise(base, o.descriptor, cfg, ops));
  return out;
}

/// Turns the unexplained frames of a foray into a patch against `base`.
///
/// Each failed frame becomes a node. Consecutive new nodes are chained with
/// the odometry as translation, and a new run is anchored to the nodes the
/// neighbouring frames localised against.
inline Patch patch_from_localisations(const Graph& base, std::span<const Observation> obs,
                                      std::span<const Localisation> loc, RobotId creator,
                                      std::uint32_t foray, NodeIdGenerator& ids) {
  Graph to = base;
  {
    auto ed = to.edit();
    std::vector<std::optional<NodeId>> created(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (loc[i].ok()) continue;
      Node n;
      n.id = ids.next();
      n.descriptor = obs[i].descriptor;
      n.inlier_count = obs[i].inliers;
      n.fabmap_score = obs[i].appearance_score;
      n.product = obs[i].product;
      n.creator = creator;
      n.foray = foray;
      created[i] = n.id;
      ed.insert_node(std::move(n));
    }
    for (std::size_t i = 1; i < obs.size(); ++i) {
      if (!(obs[i].travelled > 0.0)) continue;
      const auto prev = created[i - 1] ? created[i - 1] : loc[i - 1].node;
      const auto cur = created[i] ? created[i] : loc[i].node;
      if (!created[i - 1] && !created[i]) continue;
      if (!prev || !cur || *prev == *cur || to.edge(*prev, *cur)) continue;
      ed.insert_edge(Edge{*prev, *cur, Pose::from_translation(obs[i].travelled)});
    }
  }
  return make_patch(base, to);
}

/// Localises every frame against `base` and records the unexplained ones.
inline Patch record_foray_patch(const Graph& base, std::span<const Observation> obs,
                                RobotId creator, std::uint32_t foray, const LocaliserConfig& cfg,
                                NodeIdGenerator& ids, OpCounter* ops = nullptr) {
  const auto loc = localise_observations(base, obs, cfg, ops);
  return patch_from_localisations(base, obs, loc, creator, foray, ids);
}

}  // namespace expmarket
