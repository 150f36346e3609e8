#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>
#include <thread>
#include <vector>

namespace usplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat43 = Eigen::Matrix<double, 4, 3>;

// Quaternions are stored (w, x, y, z) everywhere in this codebase.

inline Vec4 quat_identity() { return Vec4(1.0, 0.0, 0.0, 0.0); }

inline Vec4 qmul(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Vec4 qconj(const Vec4& q) { return Vec4(q[0], -q[1], -q[2], -q[3]); }

inline Vec4 qnormalized(const Vec4& q) { return q / q.norm(); }

// Flip to the w >= 0 half sphere; q and -q encode the same rotation.
inline Vec4 align_hemisphere(const Vec4& q) { return q[0] < 0.0 ? Vec4(-q) : q; }

inline Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v[2], v[1],
       v[2], 0.0, -v[0],
       -v[1], v[0], 0.0;
  return m;
}

// Rotation matrix of a unit quaternion.
inline Mat3 qrot_matrix(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

inline Vec3 qrotate(const Vec4& q, const Vec3& v) {
  const Vec3 u(q[1], q[2], q[3]);
  const Vec3 t = 2.0 * u.cross(v);
  return v + q[0] * t + u.cross(t);
}

inline Vec4 quat_from_axis_angle(const Vec3& axis, double angle) {
  const double h = 0.5 * angle;
  const Vec3 u = axis.normalized() * std::sin(h);
  return Vec4(std::cos(h), u[0], u[1], u[2]);
}

// d(a*b)/db, the left-multiplication matrix of a.
inline Mat4 qmul_jac_right(const Vec4& a) {
  Mat4 m;
  m << a[0], -a[1], -a[2], -a[3],
       a[1], a[0], -a[3], a[2],
       a[2], a[3], a[0], -a[1],
       a[3], -a[2], a[1], a[0];
  return m;
}

// d(a*b)/da, the right-multiplication matrix of b.
inline Mat4 qmul_jac_left(const Vec4& b) {
  Mat4 m;
  m << b[0], -b[1], -b[2], -b[3],
       b[1], b[0], b[3], -b[2],
       b[2], -b[3], b[0], b[1],
       b[3], b[2], -b[1], b[0];
  return m;
}

inline Mat4 qconj_jac() {
  Mat4 m = Mat4::Identity();
  m(1, 1) = m(2, 2) = m(3, 3) = -1.0;
  return m;
}

// d(q/|q|)/dq.
inline Mat4 qnormalize_jac(const Vec4& q) {
  const double n = q.norm();
  const Vec4 qh = q / n;
  return (Mat4::Identity() - qh * qh.transpose()) / n;
}

// d(R(q) v)/dq for unit q.  Chain with qnormalize_jac for raw parameters.
inline Mat34 qrotate_jac_q(const Vec4& q, const Vec3& v) {
  const double w = q[0];
  const Vec3 u(q[1], q[2], q[3]);
  Mat34 j;
  j.col(0) = 2.0 * (w * v + u.cross(v));
  j.block<3, 3>(0, 1) =
      2.0 * (-v * u.transpose() + u.dot(v) * Mat3::Identity() + u * v.transpose() -
             w * cross_matrix(v));
  return j;
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// One root seed, one derived stream per named stage.
inline uint64_t derive_seed(uint64_t root, std::string_view stage) {
  return splitmix64(root ^ fnv1a64(stage));
}

// Deterministic RNG helper.  The distributions are implemented directly on the
// engine output so sequences do not depend on the standard library vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds.
  int uniform_int(int lo, int hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec3 normal3() { return Vec3(normal(), normal(), normal()); }

  Vec3 unit_vector() {
    while (true) {
      const Vec3 v(uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0));
      const double n2 = v.squaredNorm();
      if (n2 > 1e-8 && n2 <= 1.0) return v / std::sqrt(n2);
    }
  }

  // Uniform inside a ball.
  Vec3 ball(double radius) {
    const double r = radius * std::cbrt(uniform());
    return r * unit_vector();
  }

  Vec4 unit_quaternion() {
    const Vec4 q(normal(), normal(), normal(), normal());
    const double n = q.norm();
    if (n < 1e-9) return quat_identity();
    return q / n;
  }

 private:
  std::mt19937_64 eng_;
};

// sqrt(d^T M d + eps); eps keeps the gradient defined at d = 0.
inline double smooth_mnorm(const Vec3& d, const Mat3& m, double eps) {
  return std::sqrt(d.dot(m * d) + eps);
}

// Runs fn(begin, end) over chunks of [0, n).  Falls back to a direct call for
// a single thread; chunk results must be independent for determinism.
inline void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
  if (threads <= 1 || n <= 1) {
    fn(0, n);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& t : pool) t.join();
}

}  // namespace usplat
