#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>

#include <openssl/evp.h>

#include "expmarket/core.hpp"

namespace expmarket {

using Hash256 = std::array<std::uint8_t, 32>;

inline Hash256 sha256(std::span<const std::uint8_t> data) {
  Hash256 out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw std::runtime_error("EVP_Digest(sha256) failed");
  }
  return out;
}

/// 256-bit identity of a graph state.
///
/// The digest is SHA-256 over the ascending-sorted concatenation of per-item
/// SHA-256 hashes (one per node, one per edge), so it is invariant to the
/// order content was inserted in. The empty graph hashes the empty string;
/// see kEmptyStateHex.
struct StateDigest {
  Hash256 bytes{};

  friend auto operator<=>(const StateDigest&, const StateDigest&) = default;

  std::string hex() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : bytes) {
      s.push_back(kHex[b >> 4]);
      s.push_back(kHex[b & 0x0f]);
    }
    return s;
  }

  std::string prefix(std::size_t nibbles = 12) const { return hex().substr(0, nibbles); }

  static StateDigest empty_state();
};

inline constexpr const char* kEmptyStateHex =
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

inline StateDigest StateDigest::empty_state() {
  return StateDigest{sha256(std::span<const std::uint8_t>{})};
}

}  // namespace expmarket
