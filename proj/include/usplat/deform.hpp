#pragma once

#include "usplat/scene.hpp"

#include <span>
#include <utility>
#include <vector>

namespace usplat {

struct RigidTransform {
  Vec4 rotation = quat_identity();  // unit quaternion
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return qrotate(rotation, p) + translation; }
};

// Unit dual quaternion: |real| = 1 and <real, dual> = 0.
struct DualQuat {
  Vec4 real = quat_identity();
  Vec4 dual = Vec4::Zero();
};

DualQuat to_dual_quaternion(const RigidTransform& t);
RigidTransform from_dual_quaternion(const DualQuat& dq);

// Renormalizes a blended dual quaternion back onto the unit manifold.
DualQuat dq_normalized(const DualQuat& dq);

// Motion of a node from its canonical frame n to frame t: rotate by
// q_t q_n^-1 about the canonical position, then translate to the current one.
RigidTransform node_transform(const GaussianTrajectory& node, int canonical, int t);

// Dual quaternion blending.  Inputs are hemisphere-aligned against the first
// transform; weights are expected to be normalized.  Throws NumericError when
// the blended real part vanishes (antipodal inputs).
RigidTransform dqb(std::span<const double> weights, std::span<const RigidTransform> transforms);

// Blended node motion over an anchor set, all taken from the same model.
RigidTransform blend_node_transforms(const Model& model, std::span<const int> nodes,
                                     std::span<const double> weights, int canonical, int t);

// Interpolated pose of a non-key Gaussian from its anchors: the blended
// transform applied to its canonical position, and the blended rotation
// composed with its canonical rotation.
std::pair<Vec3, Vec4> interpolate_non_key(const Model& model, int gaussian,
                                          std::span<const int> nodes,
                                          std::span<const double> weights, int canonical,
                                          int t);

}  // namespace usplat
