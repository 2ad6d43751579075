#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

namespace ewb {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

inline Mat3 rot_x(double deg) {
  return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitX()).toRotationMatrix();
}
inline Mat3 rot_y(double deg) {
  return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitY()).toRotationMatrix();
}
inline Mat3 rot_z(double deg) {
  return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitZ()).toRotationMatrix();
}

/// Rigid transform p' = R * p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }

  RigidTransform then(const RigidTransform& outer) const {
    // outer ∘ this
    return {outer.rotation * rotation, outer.rotation * translation + outer.translation};
  }

  RigidTransform inverse() const {
    Mat3 rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  static RigidTransform identity() { return {}; }
};

/// True if R is a proper rotation (orthonormal, det +1) within tol.
inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

/// Deterministic RNG used everywhere randomness is needed. Normal deviates
/// are generated by Box-Muller (two fresh uniforms per call) so streams do
/// not depend on library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // [0, 1)
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }
  double normal(double mean = 0.0, double sigma = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 5e-324;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    return mean + sigma * z;
  }
  std::uint64_t next_u64() { return engine_(); }

  /// Independent substream for item `index` of a batch keyed by `seed`.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix(seed, index));
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the pair
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ewb
