#pragma once

#include <array>
#include <string>
#include <vector>

#include "expmarket/core.hpp"

namespace expmarket::sim {

enum class Phase { Idle, Mapping, Sampling, Tendering, Purchasing, Merging };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "IDLE";
    case Phase::Mapping: return "MAPPING";
    case Phase::Sampling: return "SAMPLING";
    case Phase::Tendering: return "TENDERING";
    case Phase::Purchasing: return "PURCHASING";
    case Phase::Merging: return "MERGING";
  }
  return "?";
}

/// The fixed cycle an agent moves through each epoch.
inline Phase next_phase(Phase p) {
  switch (p) {
    case Phase::Mapping: return Phase::Sampling;
    case Phase::Sampling: return Phase::Tendering;
    case Phase::Tendering: return Phase::Purchasing;
    case Phase::Purchasing: return Phase::Merging;
    case Phase::Merging: return Phase::Idle;
    case Phase::Idle: return Phase::Mapping;
  }
  return Phase::Idle;
}

/// Descriptor plus semaphore: psi counts entries into the current phase.
struct FsmState {
  Phase theta = Phase::Idle;
  std::uint64_t psi = 0;

  friend bool operator==(const FsmState&, const FsmState&) = default;
};

class AgentFsm {
 public:
  const FsmState& state() const { return state_; }

  const FsmState& advance() {
    const Phase p = next_phase(state_.theta);
    state_ = FsmState{p, ++entries_[static_cast<std::size_t>(p)]};
    return state_;
  }

 private:
  FsmState state_;
  std::array<std::uint64_t, 6> entries_{};
};

enum class BarrierResult { Proceed, Wait };

inline BarrierResult barrier_sync(const std::vector<FsmState>& team) {
  BarrierResult r = BarrierResult::Proceed;
  for (std::size_t i = 0; i < team.size(); ++i) {
    for (std::size_t j = i + 1; j < team.size(); ++j) {
      if (team[i].psi == team[j].psi && team[i].theta != team[j].theta) {
        throw Error(Errc::DesyncDetected,
                    "robots " + std::to_string(i) + " and " + std::to_string(j) + " share psi " +
                        std::to_string(team[i].psi) + " in " + to_string(team[i].theta) + " vs " +
                        to_string(team[j].theta));
      }
      if (!(team[i] == team[j])) r = BarrierResult::Wait;
    }
  }
  return r;
}

}  // namespace expmarket::sim
