#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace expmarket {

using RobotId = std::uint32_t;

// Section-of-interest index into a Catalogue.
struct ProductIndex {
  std::uint32_t value{0};

  friend auto operator<=>(const ProductIndex&, const ProductIndex&) = default;
};

enum class Errc {
  StateMismatch,
  MissingTarget,
  DanglingEdge,
  PatchConflict,
  UnsupportedComposition,
  UnknownNode,
  NonScoringPolicy,
  NonSymmetricPolicy,
  IntegrityViolation,
  EmptyPatch,
  NoEligibleSellers,
  OutOfWorld,
  DesyncDetected,
  ConfigError,
  ParseError,
};

inline const char* to_string(Errc e) {
  switch (e) {
    case Errc::StateMismatch: return "StateMismatch";
    case Errc::MissingTarget: return "MissingTarget";
    case Errc::DanglingEdge: return "DanglingEdge";
    case Errc::PatchConflict: return "PatchConflict";
    case Errc::UnsupportedComposition: return "UnsupportedComposition";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::NonScoringPolicy: return "NonScoringPolicy";
    case Errc::NonSymmetricPolicy: return "NonSymmetricPolicy";
    case Errc::IntegrityViolation: return "IntegrityViolation";
    case Errc::EmptyPatch: return "EmptyPatch";
    case Errc::NoEligibleSellers: return "NoEligibleSellers";
    case Errc::OutOfWorld: return "OutOfWorld";
    case Errc::DesyncDetected: return "DesyncDetected";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// splitmix64 finaliser; used to derive independent seed streams.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(seed ^ mix64(a + 0x51ed270b27ULL)) ^ mix64(b + 0x2545f4914fULL));
}

/// Seeded random stream with platform-independent derived distributions.
///
/// std::mt19937_64 output is fully specified by the standard; the standard
/// distributions are not, so uniform/normal draws are derived here by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Shortest round-trip decimal representation, used for every numeric field
/// written to disk so output bytes are reproducible.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(Errc::ParseError, "not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(Errc::ParseError, "not an unsigned integer: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace expmarket
