#pragma once

#include <array>
#include <cmath>

#include <Eigen/Geometry>

namespace expmarket {

/// Rigid 6DoF transform: translation in metres plus a unit quaternion
/// (w, x, y, z). Canonical form has a normalised quaternion with w >= 0.
struct Pose {
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  std::array<double, 4> rotation{1.0, 0.0, 0.0, 0.0};

  static Pose identity() { return {}; }

  static Pose from_translation(double x, double y = 0.0, double z = 0.0) {
    Pose p;
    p.translation = {x, y, z};
    return p;
  }

  /// Idempotent: a quaternion already within 1e-12 of unit norm is not
  /// rescaled, and the sign is fixed so the first non-zero component of
  /// (w, x, y, z) is positive.
  Pose canonical() const {
    Pose p = *this;
    const double n = std::sqrt(rotation[0] * rotation[0] + rotation[1] * rotation[1] +
                               rotation[2] * rotation[2] + rotation[3] * rotation[3]);
    if (n == 0.0 || !std::isfinite(n)) {
      p.rotation = {1.0, 0.0, 0.0, 0.0};
    } else if (std::abs(n - 1.0) > 1e-12) {
      for (auto& c : p.rotation) c /= n;
    }
    for (double c : p.rotation) {
      if (c == 0.0) continue;
      if (c < 0.0)
        for (auto& d : p.rotation) d = -d;
      break;
    }
    for (auto& c : p.rotation) c = c == 0.0 ? 0.0 : c;  // no negative zero
    for (auto& c : p.translation) c = c == 0.0 ? 0.0 : c;
    return p;
  }

  /// this ∘ rhs: rhs expressed in this frame.
  Pose compose(const Pose& rhs) const {
    const auto a = to_isometry();
    const auto b = rhs.to_isometry();
    return from_isometry(a * b);
  }

  Pose inverse() const { return from_isometry(to_isometry().inverse()); }

  friend bool operator==(const Pose&, const Pose&) = default;

 private:
  Eigen::Isometry3d to_isometry() const {
    Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
    Eigen::Quaterniond q(rotation[0], rotation[1], rotation[2], rotation[3]);
    q.normalize();
    iso.linear() = q.toRotationMatrix();
    iso.translation() = Eigen::Vector3d(translation[0], translation[1], translation[2]);
    return iso;
  }

  static Pose from_isometry(const Eigen::Isometry3d& iso) {
    Eigen::Quaterniond q(iso.rotation());
    Pose p;
    p.translation = {iso.translation().x(), iso.translation().y(), iso.translation().z()};
    p.rotation = {q.w(), q.x(), q.y(), q.z()};
    return p.canonical();
  }
};

}  // namespace expmarket
