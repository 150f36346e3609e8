#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "usplat/scene.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

using namespace usplat;

namespace {

SceneConfig small_config() {
  SceneConfig c;
  c.gaussian_count = 30;
  c.frame_count = 10;
  c.image_width = 32;
  c.image_height = 32;
  c.seed = 77;
  return c;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  const SceneConfig c = small_config();
  const std::string a = serialize_scene(make_orbit_scene(c), "h");
  const std::string b = serialize_scene(make_orbit_scene(c), "h");
  CHECK(a == b);

  SceneConfig other = c;
  other.seed = 78;
  CHECK(serialize_scene(make_orbit_scene(other), "h") != a);
}

TEST_CASE("static preset holds every state constant") {
  SceneConfig c = small_config();
  c.preset = MotionPreset::kStatic;
  const SyntheticScene scene = make_orbit_scene(c);
  for (const auto& g : scene.truth) {
    for (int t = 1; t < scene.frame_count; ++t) {
      CHECK((g.positions[t] - g.positions[0]).norm() == 0.0);
      CHECK((g.rotations[t] - g.rotations[0]).norm() == 0.0);
    }
  }
}

TEST_CASE("rigid preset preserves pairwise distances") {
  SceneConfig c = small_config();
  c.preset = MotionPreset::kRigidRotation;
  const SyntheticScene scene = make_orbit_scene(c);
  for (int i = 0; i < 10; ++i) {
    for (int j = i + 1; j < 10; ++j) {
      const double d0 =
          (scene.truth[i].positions[0] - scene.truth[j].positions[0]).norm();
      for (int t = 1; t < scene.frame_count; ++t) {
        const double dt =
            (scene.truth[i].positions[t] - scene.truth[j].positions[t]).norm();
        CHECK(dt == doctest::Approx(d0).epsilon(1e-12));
      }
    }
  }
  // Real motion, not a static copy.
  double moved = 0.0;
  for (const auto& g : scene.truth)
    moved += (g.positions.back() - g.positions.front()).norm();
  CHECK(moved > 0.01);
}

TEST_CASE("articulated preset hinges about the z axis") {
  SceneConfig c = small_config();
  c.preset = MotionPreset::kArticulated;
  const SyntheticScene scene = make_orbit_scene(c);
  const int half = c.gaussian_count / 2;
  for (int i = 0; i < c.gaussian_count; ++i) {
    const auto& g = scene.truth[i];
    for (int t = 1; t < scene.frame_count; ++t) {
      // Rotation about z keeps height and cylinder radius.
      CHECK(g.positions[t][2] == doctest::Approx(g.positions[0][2]).epsilon(1e-12));
      CHECK(g.positions[t].head<2>().norm() ==
            doctest::Approx(g.positions[0].head<2>().norm()).epsilon(1e-12));
    }
  }
  // The two parts move at different rates, so cross-part distances change.
  bool changed = false;
  for (int i = 0; i < half && !changed; ++i) {
    const double d0 =
        (scene.truth[i].positions[0] - scene.truth[half].positions[0]).norm();
    const double d1 =
        (scene.truth[i].positions.back() - scene.truth[half].positions.back()).norm();
    changed = std::abs(d1 - d0) > 1e-6;
  }
  CHECK(changed);
}

TEST_CASE("occlusion schedule") {
  SceneConfig c = small_config();
  c.gaussian_count = 50;
  c.frame_count = 24;
  c.occlusion_fraction = 0.2;
  const SyntheticScene scene = make_orbit_scene(c);

  int occluded = 0;
  for (int i = 0; i < c.gaussian_count; ++i) {
    if (scene.occlusion[i].empty()) continue;
    ++occluded;
    CHECK(scene.occlusion[i].size() == 1);
    const auto& iv = scene.occlusion[i][0];
    CHECK(iv.begin >= 1);  // frame 0 stays visible for everyone
    CHECK(iv.end <= c.frame_count);
    const int len = iv.end - iv.begin;
    CHECK(len >= std::max(3, c.frame_count / 6));
    CHECK(len <= std::max(std::max(3, c.frame_count / 6), c.frame_count / 3));
  }
  CHECK(occluded == 10);

  // visible_at matches the intervals and the mask matches visible_at.
  for (int t = 0; t < scene.frame_count; ++t) {
    const auto mask = scene.visibility_mask(t);
    for (int i = 0; i < c.gaussian_count; ++i) {
      bool inside = false;
      for (const auto& iv : scene.occlusion[i])
        inside = inside || (t >= iv.begin && t < iv.end);
      CHECK(scene.visible_at(i, t) == !inside);
      CHECK((mask[i] != 0) == scene.visible_at(i, t));
    }
  }
  for (int i = 0; i < c.gaussian_count; ++i) CHECK(scene.visible_at(i, 0));
}

TEST_CASE("cameras orbit the centroid and aim at it") {
  const SceneConfig c = small_config();
  const SyntheticScene scene = make_orbit_scene(c);
  CHECK(static_cast<int>(scene.input_cameras.size()) == c.frame_count);
  CHECK(scene.eval_cameras.size() == c.eval_offsets_deg.size());

  for (const Camera& cam : scene.input_cameras) {
    cam.validate();
    CHECK((cam.t_wc - scene.look_target).norm() ==
          doctest::Approx(c.orbit_radius).epsilon(1e-12));
    // The target sits on the optical axis, in front of the camera.
    const Vec3 p = cam.world_to_camera(scene.look_target);
    CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(p[2] == doctest::Approx(c.orbit_radius).epsilon(1e-10));
  }

  // Distinct azimuths give distinct eyes.
  std::set<double> xs;
  for (const Camera& cam : scene.input_cameras) xs.insert(cam.t_wc[0]);
  CHECK(xs.size() > 1);
}

TEST_CASE("image y grows downward") {
  const Camera cam = look_at_camera(Vec3(3, 0, 0), Vec3::Zero(), 64.0, 32, 32);
  const Vec3 above = cam.world_to_camera(Vec3(0, 0, 0.1));
  CHECK(above[1] < 0.0);  // world up lands above the principal point
  CHECK_THROWS_AS(look_at_camera(Vec3(0, 0, 1), Vec3::Zero(), 64.0, 32, 32), ConfigError);
}

TEST_CASE("config validation rejects bad ranges") {
  SceneConfig c = small_config();
  c.gaussian_count = 0;
  CHECK_THROWS_AS(make_orbit_scene(c), ConfigError);
  c = small_config();
  c.frame_count = 2;
  CHECK_THROWS_AS(make_orbit_scene(c), ConfigError);
  c = small_config();
  c.occlusion_fraction = 1.0;
  CHECK_THROWS_AS(make_orbit_scene(c), ConfigError);
  c = small_config();
  c.scale_min = 0.0;
  CHECK_THROWS_AS(make_orbit_scene(c), ConfigError);
  c = small_config();
  c.opacity_max = 1.5;
  CHECK_THROWS_AS(make_orbit_scene(c), ConfigError);
}

TEST_CASE("preset names round trip with aliases") {
  for (MotionPreset p :
       {MotionPreset::kStatic, MotionPreset::kRigidRotation, MotionPreset::kArticulated})
    CHECK(preset_from_name(preset_name(p)) == p);
  CHECK(preset_from_name("rigid") == MotionPreset::kRigidRotation);
  CHECK(preset_from_name("articulated") == MotionPreset::kArticulated);
  CHECK(preset_from_name("articulated_two_part") == MotionPreset::kArticulated);
  CHECK_THROWS_AS(preset_from_name("wobble"), ConfigError);
}

TEST_CASE("scene serialization round trips") {
  SceneConfig c = small_config();
  c.occlusion_fraction = 0.3;
  c.preset = MotionPreset::kArticulated;
  const SyntheticScene scene = make_orbit_scene(c);
  const std::string text = serialize_scene(scene, "deadbeef00000000");
  const SyntheticScene back = deserialize_scene(text);
  CHECK(serialize_scene(back, "deadbeef00000000") == text);

  const std::string path = (std::filesystem::temp_directory_path() / "scene_rt.json").string();
  save_scene(scene, path, "deadbeef00000000");
  const SyntheticScene loaded = load_scene(path);
  CHECK(serialize_scene(loaded, "deadbeef00000000") == text);
  std::filesystem::remove(path);
}

TEST_CASE("model serialization keeps provenance and hash") {
  const SyntheticScene scene = make_orbit_scene(small_config());
  const std::string text = serialize_model(scene.truth, "pretrain:vanilla", "abc123");
  std::string provenance, hash;
  const Model back = deserialize_model(text, &provenance, &hash);
  CHECK(provenance == "pretrain:vanilla");
  CHECK(hash == "abc123");
  CHECK(serialize_model(back, provenance, hash) == text);
}

TEST_CASE("state access and bounds") {
  const SyntheticScene scene = make_orbit_scene(small_config());
  CHECK_THROWS_AS(scene.truth[0].state_at(scene.frame_count), ShapeError);
  CHECK_THROWS_AS(scene.truth[0].state_at(-1), ShapeError);

  const auto states = states_at(scene.truth, 3);
  CHECK(states.size() == scene.truth.size());
  CHECK((states[5].position - scene.truth[5].positions[3]).norm() == 0.0);

  Vec3 lo, hi;
  model_bounds(scene.truth, &lo, &hi);
  for (const auto& g : scene.truth)
    for (const auto& p : g.positions)
      for (int c3 = 0; c3 < 3; ++c3) {
        CHECK(p[c3] >= lo[c3]);
        CHECK(p[c3] <= hi[c3]);
      }
}

TEST_CASE("covariance of a state") {
  GaussianState g;
  g.scale = Vec3(0.1, 0.2, 0.3);
  const Mat3 cov = covariance_of(g);
  CHECK((cov - Vec3(0.01, 0.04, 0.09).asDiagonal().toDenseMatrix()).norm() < 1e-15);

  // Rotation conjugates the diagonal; eigenvalues survive.
  g.rotation = quat_from_axis_angle(Vec3(1, 1, 0).normalized(), 0.8);
  const Mat3 rotated = covariance_of(g);
  Eigen::SelfAdjointEigenSolver<Mat3> es(rotated);
  CHECK(es.eigenvalues()[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(es.eigenvalues()[2] == doctest::Approx(0.09).epsilon(1e-12));
}
