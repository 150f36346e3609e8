#pragma once

#include "usplat/errors.hpp"
#include "usplat/mathutil.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace usplat {

// One Gaussian at one frame.  Rotation is a raw (w,x,y,z) quaternion and is
// normalized wherever it is used as a rotation.
struct GaussianState {
  Vec3 position = Vec3::Zero();
  Vec4 rotation = quat_identity();
  Vec3 scale = Vec3::Ones();
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();
};

// World-space covariance R(q) diag(s^2) R(q)^T.
Mat3 covariance_of(const GaussianState& g);

// Per-Gaussian trajectory: position and rotation vary over frames, everything
// else is shared across the sequence.
struct GaussianTrajectory {
  std::vector<Vec3> positions;
  std::vector<Vec4> rotations;
  Vec3 scale = Vec3::Ones();
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();

  int frames() const { return static_cast<int>(positions.size()); }
  GaussianState state_at(int t) const;
};

using Model = std::vector<GaussianTrajectory>;

std::vector<GaussianState> states_at(const Model& model, int t);
int model_frames(const Model& model);

// Pinhole camera.  R_wc/t_wc map camera coordinates to world coordinates; the
// optical axis is camera +z.
struct Camera {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  Mat3 R_wc = Mat3::Identity();
  Vec3 t_wc = Vec3::Zero();
  int width = 0, height = 0;

  Vec3 world_to_camera(const Vec3& p_world) const {
    return R_wc.transpose() * (p_world - t_wc);
  }
  Vec3 optical_axis() const { return R_wc.col(2); }
  void validate() const;
};

Camera look_at_camera(const Vec3& eye, const Vec3& target, double focal_px, int width,
                      int height);

// Half-open frame interval during which a Gaussian is hidden from the input view.
struct OcclusionInterval {
  int begin = 0;
  int end = 0;
};

enum class MotionPreset { kStatic, kRigidRotation, kArticulated };

std::string preset_name(MotionPreset p);
MotionPreset preset_from_name(const std::string& name);

struct SceneConfig {
  int gaussian_count = 400;
  int frame_count = 121;
  double orbit_radius = 3.0;
  double step_deg = 3.0;
  double input_elevation_deg = 20.0;
  std::vector<double> eval_offsets_deg = {30, 60, 90, 120, 150, 180};
  double eval_elevation_deg = 35.0;
  MotionPreset preset = MotionPreset::kRigidRotation;
  double occlusion_fraction = 0.0;
  int image_width = 128;
  int image_height = 128;
  double focal_px = 0.0;  // <= 0 selects 2 * image_width
  double rotation_deg_per_frame = 1.5;
  double articulated_rate_a_deg = 0.6;
  double articulated_rate_b_deg = -0.9;
  int occlusion_min_frames = 0;  // <= 0 selects max(3, T/6)
  int occlusion_max_frames = 0;  // <= 0 selects max(min, T/3)
  double scale_min = 0.015;
  double scale_max = 0.05;
  double opacity_min = 0.35;
  double opacity_max = 0.95;
  uint64_t seed = 1;

  void validate() const;
};

struct SyntheticScene {
  Model truth;
  std::vector<Camera> input_cameras;  // one per frame
  std::vector<Camera> eval_cameras;   // held out
  std::vector<double> eval_offsets_deg;
  std::vector<std::vector<OcclusionInterval>> occlusion;  // per Gaussian
  Vec3 look_target = Vec3::Zero();
  int frame_count = 0;
  uint64_t seed = 0;

  int gaussian_count() const { return static_cast<int>(truth.size()); }
  bool visible_at(int gaussian, int frame) const;
  // Gaussians visible from the input view at the given frame.
  std::vector<uint8_t> visibility_mask(int frame) const;
};

// Deterministic synthetic scene: object of unit diameter at the origin, input
// camera orbiting at the configured radius and always aimed at the centroid of
// the first frame.
SyntheticScene make_orbit_scene(const SceneConfig& config);

std::string serialize_scene(const SyntheticScene& scene, const std::string& config_hash);
SyntheticScene deserialize_scene(const std::string& text);
void save_scene(const SyntheticScene& scene, const std::string& path,
                const std::string& config_hash);
SyntheticScene load_scene(const std::string& path);

// Model snapshots (pretrained state and optimized checkpoints share a format).
std::string serialize_model(const Model& model, const std::string& provenance,
                            const std::string& config_hash);
Model deserialize_model(const std::string& text, std::string* provenance = nullptr,
                        std::string* config_hash = nullptr);
void save_model(const Model& model, const std::string& path, const std::string& provenance,
                const std::string& config_hash);
Model load_model(const std::string& path, std::string* provenance = nullptr,
                 std::string* config_hash = nullptr);

// Axis-aligned bounds over every frame of every trajectory.
void model_bounds(const Model& model, Vec3* lo, Vec3* hi);

}  // namespace usplat
