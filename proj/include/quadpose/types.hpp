#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace quadpose {

using Scalar = double;

using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using MatX2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;
using MatX3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3>;
using Quat = Eigen::Quaternion<Scalar>;
using Isometry = Eigen::Transform<Scalar, 3, Eigen::Isometry>;

/// Validation failures on user-supplied data. Callers map this to exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Canonical form: non-negative scalar part (w > 0, or tie-broken on the
/// vector part when w == 0), unit norm. Two quaternions encoding the same
/// rotation canonicalize to the same representative.
inline Quat canonicalized(const Quat& q) {
  Quat u = q.normalized();
  bool flip = u.w() < 0.0;
  if (u.w() == 0.0) {
    if (u.x() != 0.0)
      flip = u.x() < 0.0;
    else if (u.y() != 0.0)
      flip = u.y() < 0.0;
    else
      flip = u.z() < 0.0;
  }
  if (flip) u.coeffs() = -u.coeffs();
  return u;
}

/// splitmix64; used to derive independent per-job seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace quadpose
