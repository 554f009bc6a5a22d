#pragma once

#include <map>
#include <vector>

#include "expmarket/patch.hpp"

namespace expmarket {

/// Linear patch history starting from the empty graph.
struct History {
  StateDigest origin = StateDigest::empty_state();
  std::vector<Patch> patches;

  StateDigest head() const { return patches.empty() ? origin : patches.back().output_state; }

  bool is_linear() const {
    StateDigest cur = origin;
    for (const auto& p : patches) {
      if (p.input_state != cur) return false;
      cur = p.output_state;
    }
    return true;
  }

  void append(Patch p) {
    if (p.input_state != head()) {
      throw Error(Errc::StateMismatch, "history head " + head().prefix() + " != patch input " +
                                           p.input_state.prefix());
    }
    patches.push_back(std::move(p));
  }
};

/// Folds the history over the empty graph.
inline Graph replay(const History& h) {
  Graph g;
  if (h.origin != g.digest()) throw Error(Errc::StateMismatch, "history does not start empty");
  for (const auto& p : h.patches) g = apply_patch(g, p);
  return g;
}

/// Record of content removed by a match merge, so that later trades with
/// agents still holding the dropped node converge on the kept one.
struct Tombstone {
  NodeId keep;
  Pose drop_to_keep;
};

struct Repository {
  Graph graph;
  History history;
  std::map<NodeId, Tombstone> tombstones;

  const StateDigest& digest() const { return graph.digest(); }

  /// Applies and records a patch. Empty patches leave the history untouched.
  void commit(const Patch& p) {
    graph = apply_patch(graph, p);
    if (!p.empty()) history.append(p);
  }
};

}  // namespace expmarket
