#include "usplat/deform.hpp"

#include "usplat/errors.hpp"

#include <cmath>

namespace usplat {

DualQuat to_dual_quaternion(const RigidTransform& t) {
  DualQuat dq;
  dq.real = t.rotation;
  const Vec4 tq(0.0, t.translation[0], t.translation[1], t.translation[2]);
  dq.dual = 0.5 * qmul(tq, t.rotation);
  return dq;
}

RigidTransform from_dual_quaternion(const DualQuat& dq) {
  RigidTransform t;
  t.rotation = dq.real;
  const Vec4 tq = qmul(dq.dual, qconj(dq.real));
  t.translation = 2.0 * Vec3(tq[1], tq[2], tq[3]);
  return t;
}

DualQuat dq_normalized(const DualQuat& dq) {
  const double n = dq.real.norm();
  if (n < 1e-12) throw NumericError("dual quaternion with vanishing real part");
  DualQuat out;
  out.real = dq.real / n;
  // Remove the component violating <real, dual> = 0.
  const Vec4 d = dq.dual / n;
  out.dual = d - out.real * out.real.dot(d);
  return out;
}

RigidTransform node_transform(const GaussianTrajectory& node, int canonical, int t) {
  const Vec4 qn = qnormalized(node.rotations[canonical]);
  const Vec4 qt = qnormalized(node.rotations[t]);
  RigidTransform out;
  out.rotation = qmul(qt, qconj(qn));
  out.translation = node.positions[t] - qrotate(out.rotation, node.positions[canonical]);
  return out;
}

RigidTransform dqb(std::span<const double> weights,
                   std::span<const RigidTransform> transforms) {
  if (transforms.empty()) throw ShapeError("dqb over an empty transform list");
  if (weights.size() != transforms.size())
    throw ShapeError("dqb weight/transform count mismatch");

  DualQuat sum;
  sum.real = Vec4::Zero();
  sum.dual = Vec4::Zero();
  const Vec4 ref = transforms[0].rotation;
  for (size_t j = 0; j < transforms.size(); ++j) {
    DualQuat dq = to_dual_quaternion(transforms[j]);
    const double sign = ref.dot(dq.real) < 0.0 ? -1.0 : 1.0;
    sum.real += weights[j] * sign * dq.real;
    sum.dual += weights[j] * sign * dq.dual;
  }
  if (sum.real.norm() < 1e-12)
    throw NumericError("degenerate dual quaternion blend: real part vanished");
  return from_dual_quaternion(dq_normalized(sum));
}

RigidTransform blend_node_transforms(const Model& model, std::span<const int> nodes,
                                     std::span<const double> weights, int canonical,
                                     int t) {
  std::vector<RigidTransform> transforms;
  transforms.reserve(nodes.size());
  for (int j : nodes) transforms.push_back(node_transform(model[j], canonical, t));
  return dqb(weights, transforms);
}

std::pair<Vec3, Vec4> interpolate_non_key(const Model& model, int gaussian,
                                          std::span<const int> nodes,
                                          std::span<const double> weights, int canonical,
                                          int t) {
  const RigidTransform blend = blend_node_transforms(model, nodes, weights, canonical, t);
  const Vec3 p = blend.apply(model[gaussian].positions[canonical]);
  const Vec4 q = qmul(blend.rotation, qnormalized(model[gaussian].rotations[canonical]));
  return {p, q};
}

}  // namespace usplat
