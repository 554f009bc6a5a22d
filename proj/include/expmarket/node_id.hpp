#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "expmarket/core.hpp"

namespace expmarket {

/// 128-bit node identifier, ordered byte-lexicographically.
struct NodeId {
  std::array<std::uint8_t, 16> bytes{};

  friend auto operator<=>(const NodeId&, const NodeId&) = default;

  /// 8-4-4-4-12 lowercase hex.
  std::string str() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(36);
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      if (i == 4 || i == 6 || i == 8 || i == 10) out.push_back('-');
      out.push_back(kHex[bytes[i] >> 4]);
      out.push_back(kHex[bytes[i] & 0x0f]);
    }
    return out;
  }

  static NodeId parse(std::string_view text) {
    NodeId id;
    std::size_t nibble = 0;
    for (char c : text) {
      if (c == '-') continue;
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
      else throw Error(Errc::ParseError, "bad node id '" + std::string(text) + "'");
      if (nibble >= 32) throw Error(Errc::ParseError, "node id too long");
      auto& b = id.bytes[nibble / 2];
      b = static_cast<std::uint8_t>(nibble % 2 == 0 ? (v << 4) : (b | v));
      ++nibble;
    }
    if (nibble != 32) throw Error(Errc::ParseError, "node id too short");
    return id;
  }

  static NodeId from_words(std::uint64_t hi, std::uint64_t lo) {
    NodeId id;
    for (int i = 0; i < 8; ++i) {
      id.bytes[i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
      id.bytes[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
    }
    return id;
  }
};

/// Per-robot namespaced id source. The high word is drawn from a seeded
/// stream; the low word holds (robot, counter) so ids never collide across a
/// team regardless of the random part.
class NodeIdGenerator {
 public:
  NodeIdGenerator(std::uint64_t seed, RobotId robot)
      : rng_(derive_seed(seed, 0x1d, robot)), robot_(robot) {}

  NodeId next() {
    const std::uint64_t hi = rng_.next();
    const std::uint64_t lo = (static_cast<std::uint64_t>(robot_) << 32) | counter_++;
    return NodeId::from_words(hi, lo);
  }

  RobotId robot() const { return robot_; }

 private:
  Rng rng_;
  RobotId robot_;
  std::uint32_t counter_ = 0;
};

}  // namespace expmarket

template <>
struct std::hash<expmarket::NodeId> {
  std::size_t operator()(const expmarket::NodeId& id) const noexcept {
    std::uint64_t h = 0;
    for (auto b : id.bytes) h = h * 1099511628211ULL ^ b;
    return static_cast<std::size_t>(expmarket::mix64(h));
  }
};
