#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "usplat/deform.hpp"

#include <array>
#include <cmath>

using namespace usplat;

namespace {

RigidTransform random_rigid(Rng& rng, double translation_radius = 2.0) {
  RigidTransform t;
  t.rotation = rng.unit_quaternion();
  t.translation = rng.ball(translation_radius);
  return t;
}

double transform_distance(const RigidTransform& a, const RigidTransform& b) {
  const Vec4 qa = align_hemisphere(a.rotation);
  const Vec4 qb = align_hemisphere(b.rotation);
  return std::max((qa - qb).norm(), (a.translation - b.translation).norm());
}

RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
  RigidTransform r;
  r.rotation = qnormalized(qmul(outer.rotation, inner.rotation));
  r.translation = qrotate(outer.rotation, inner.translation) + outer.translation;
  return r;
}

}  // namespace

TEST_CASE("dual quaternion round trip preserves the transform") {
  Rng rng(101);
  for (int k = 0; k < 1000; ++k) {
    const RigidTransform t = random_rigid(rng);
    const DualQuat dq = to_dual_quaternion(t);
    // Unit constraints hold exactly.
    CHECK(std::abs(dq.real.norm() - 1.0) < 1e-12);
    CHECK(std::abs(dq.real.dot(dq.dual)) < 1e-12);
    const RigidTransform back = from_dual_quaternion(dq);
    CHECK(transform_distance(t, back) < 1e-12);

    // Acting on a point agrees with the original transform.
    const Vec3 p = rng.ball(1.5);
    CHECK((t.apply(p) - back.apply(p)).norm() < 1e-12);
  }
}

TEST_CASE("blending one input returns it") {
  Rng rng(102);
  for (int k = 0; k < 200; ++k) {
    const RigidTransform t = random_rigid(rng);
    const std::array<double, 1> w = {1.0};
    const std::array<RigidTransform, 1> ts = {t};
    CHECK(transform_distance(dqb(w, ts), t) < 1e-12);
  }
}

TEST_CASE("blending identical inputs returns the input") {
  Rng rng(103);
  for (int k = 0; k < 200; ++k) {
    const RigidTransform t = random_rigid(rng);
    std::array<double, 4> w = {0.31, 0.12, 0.4, 0.17};
    const std::array<RigidTransform, 4> ts = {t, t, t, t};
    CHECK(transform_distance(dqb(w, ts), t) < 1e-12);

    // A sign flip on one quaternion is the same rotation and must not matter.
    std::array<RigidTransform, 4> flipped = ts;
    flipped[2].rotation = -flipped[2].rotation;
    CHECK(transform_distance(dqb(w, flipped), t) < 1e-12);
  }
}

TEST_CASE("coaxial pure rotations blend to the weighted chord average") {
  Rng rng(104);
  for (int k = 0; k < 1000; ++k) {
    const Vec3 axis = rng.unit_vector();
    const double a = rng.uniform(-1.2, 1.2);
    const double b = rng.uniform(-1.2, 1.2);
    const double w = rng.uniform(0.05, 0.95);

    RigidTransform ta, tb;
    ta.rotation = quat_from_axis_angle(axis, a);
    tb.rotation = quat_from_axis_angle(axis, b);
    const std::array<double, 2> weights = {w, 1.0 - w};
    const std::array<RigidTransform, 2> ts = {ta, tb};
    const RigidTransform out = dqb(weights, ts);

    // For coaxial rotations in one hemisphere the blend equals the normalized
    // weighted quaternion sum.
    const Vec4 expect = qnormalized(w * ta.rotation + (1.0 - w) * tb.rotation);
    CHECK((align_hemisphere(out.rotation) - align_hemisphere(expect)).norm() < 1e-9);
    CHECK(out.translation.norm() < 1e-9);
  }
}

TEST_CASE("blending is equivariant under a global rigid motion") {
  Rng rng(105);
  for (int k = 0; k < 1000; ++k) {
    const RigidTransform g = random_rigid(rng);
    std::array<RigidTransform, 3> ts;
    for (auto& t : ts) t = random_rigid(rng, 0.8);
    std::array<double, 3> w = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0),
                               rng.uniform(0.1, 1.0)};
    const double sum = w[0] + w[1] + w[2];
    for (double& x : w) x /= sum;

    const RigidTransform blended_then_moved = compose(g, dqb(w, ts));
    std::array<RigidTransform, 3> moved = ts;
    for (auto& t : moved) t = compose(g, t);
    const RigidTransform moved_then_blended = dqb(w, moved);
    CHECK(transform_distance(blended_then_moved, moved_then_blended) < 1e-9);
  }
}

TEST_CASE("antipodal blends have no direction and throw") {
  // Alignment happens against the first input, so cancellation needs the
  // active pair orthogonal to it and antipodal to each other.
  RigidTransform a, b, c;
  a.rotation = quat_identity();
  b.rotation = quat_from_axis_angle(Vec3(0, 0, 1), M_PI);    // (0,0,0,1)
  c.rotation = quat_from_axis_angle(Vec3(0, 0, -1), M_PI);   // (0,0,0,-1)
  const std::array<double, 3> w = {0.0, 0.5, 0.5};
  const std::array<RigidTransform, 3> ts = {a, b, c};
  CHECK_THROWS_AS(dqb(w, ts), NumericError);

  // A pair straddling hemispheres is flipped into agreement instead.
  const std::array<double, 2> w2 = {0.5, 0.5};
  const std::array<RigidTransform, 2> ts2 = {a, b};
  const RigidTransform half = dqb(w2, ts2);
  CHECK((align_hemisphere(half.rotation) -
         align_hemisphere(quat_from_axis_angle(Vec3(0, 0, 1), M_PI / 2)))
            .norm() < 1e-12);

  const std::array<double, 1> empty_w = {1.0};
  CHECK_THROWS_AS(dqb(std::span<const double>(empty_w.data(), 0),
                      std::span<const RigidTransform>(ts.data(), 0)),
                  ShapeError);
  CHECK_THROWS_AS(dqb(std::span<const double>(empty_w.data(), 1),
                      std::span<const RigidTransform>(ts.data(), 2)),
                  ShapeError);
}

TEST_CASE("node transforms carry canonical state to the target frame") {
  Rng rng(106);
  GaussianTrajectory node;
  const int frames = 6;
  for (int t = 0; t < frames; ++t) {
    node.positions.push_back(rng.ball(1.0));
    node.rotations.push_back(rng.unit_quaternion());
  }

  for (int canonical = 0; canonical < frames; ++canonical)
    for (int t = 0; t < frames; ++t) {
      const RigidTransform tr = node_transform(node, canonical, t);
      // The canonical position must land exactly on the frame-t position.
      CHECK((tr.apply(node.positions[canonical]) - node.positions[t]).norm() < 1e-12);
      // The rotation is the relative one between the two frames.
      const Vec4 rel = qmul(qnormalized(node.rotations[t]),
                            qconj(qnormalized(node.rotations[canonical])));
      CHECK((align_hemisphere(tr.rotation) - align_hemisphere(rel)).norm() < 1e-12);
    }

  // Identity at the canonical frame itself.
  const RigidTransform id = node_transform(node, 2, 2);
  CHECK((align_hemisphere(id.rotation) - quat_identity()).norm() < 1e-12);
  CHECK(id.translation.norm() < 1e-12);
}

TEST_CASE("interpolation reproduces a rigidly moving model") {
  // Every trajectory follows one shared rigid motion, so any anchor blend must
  // reproduce the true pose of any Gaussian.
  Rng rng(107);
  const int frames = 5;
  std::vector<RigidTransform> motion(frames);
  for (int t = 1; t < frames; ++t) motion[t] = random_rigid(rng, 0.5);

  Model model(6);
  for (auto& traj : model) {
    const Vec3 p0 = rng.ball(1.0);
    const Vec4 q0 = rng.unit_quaternion();
    for (int t = 0; t < frames; ++t) {
      traj.positions.push_back(motion[t].apply(p0));
      traj.rotations.push_back(qmul(motion[t].rotation, q0));
    }
  }

  const std::array<int, 3> nodes = {1, 3, 4};
  std::array<double, 3> w = {0.5, 0.3, 0.2};
  for (int t = 0; t < frames; ++t) {
    const auto [pos, rot] = interpolate_non_key(model, 0, nodes, w, 0, t);
    CHECK((pos - model[0].positions[t]).norm() < 1e-9);
    CHECK((align_hemisphere(rot) - align_hemisphere(qnormalized(model[0].rotations[t])))
              .norm() < 1e-9);
  }
}
