#pragma once

#include <algorithm>
#include <vector>

#include "expmarket/core.hpp"

namespace expmarket::sim {

/// Simulated medium: uniform integer latency and per-robot byte counters.
class NetworkModel {
 public:
  NetworkModel(std::uint64_t latency_low, std::uint64_t latency_high, std::size_t robots)
      : low_(latency_low), high_(latency_high), sent_(robots, 0), received_(robots, 0) {
    if (high_ < low_) throw Error(Errc::ConfigError, "latency_high_ms must be >= latency_low_ms");
  }

  std::uint64_t clock() const { return clock_; }
  std::uint64_t latency_low() const { return low_; }
  std::uint64_t latency_high() const { return high_; }
  const std::vector<std::uint64_t>& bytes_sent() const { return sent_; }
  const std::vector<std::uint64_t>& bytes_received() const { return received_; }

  /// Sends `bytes` from one robot to another; returns the arrival time.
  std::uint64_t deliver(RobotId from, RobotId to, std::uint64_t bytes, Rng& rng) {
    sent_.at(from) += bytes;
    received_.at(to) += bytes;
    const std::uint64_t arrival = clock_ + low_ + rng.below(high_ - low_ + 1);
    horizon_ = std::max(horizon_, arrival);
    return arrival;
  }

  /// Advances the clock past every message delivered so far.
  void settle() { clock_ = std::max(clock_, horizon_); }

 private:
  std::uint64_t low_, high_;
  std::uint64_t clock_ = 0;
  std::uint64_t horizon_ = 0;
  std::vector<std::uint64_t> sent_, received_;
};

}  // namespace expmarket::sim
