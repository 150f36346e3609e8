#include "usplat/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace usplat {

using nlohmann::json;

Mat3 covariance_of(const GaussianState& g) {
  const Mat3 r = qrot_matrix(qnormalized(g.rotation));
  return r * g.scale.cwiseProduct(g.scale).asDiagonal() * r.transpose();
}

GaussianState GaussianTrajectory::state_at(int t) const {
  if (t < 0 || t >= frames()) throw ShapeError("trajectory frame out of range");
  GaussianState s;
  s.position = positions[t];
  s.rotation = rotations[t];
  s.scale = scale;
  s.opacity = opacity;
  s.color = color;
  return s;
}

std::vector<GaussianState> states_at(const Model& model, int t) {
  std::vector<GaussianState> out;
  out.reserve(model.size());
  for (const auto& g : model) out.push_back(g.state_at(t));
  return out;
}

int model_frames(const Model& model) {
  return model.empty() ? 0 : model.front().frames();
}

void Camera::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("camera has non-positive image size");
  if (fx <= 0.0 || fy <= 0.0) throw ConfigError("camera has non-positive focal length");
  if (std::abs(R_wc.determinant() - 1.0) > 1e-6)
    throw ConfigError("camera rotation is not a proper rotation");
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, double focal_px, int width,
                      int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 up(0.0, 0.0, 1.0);
  Vec3 right = forward.cross(up);
  const double n = right.norm();
  if (n < 1e-9) throw ConfigError("look-at direction is parallel to the up axis");
  right /= n;
  const Vec3 down = forward.cross(right);  // image y grows downward

  Camera cam;
  cam.fx = cam.fy = focal_px;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.R_wc.col(0) = right;
  cam.R_wc.col(1) = down;
  cam.R_wc.col(2) = forward;
  cam.t_wc = eye;
  cam.width = width;
  cam.height = height;
  return cam;
}

std::string preset_name(MotionPreset p) {
  switch (p) {
    case MotionPreset::kStatic: return "static";
    case MotionPreset::kRigidRotation: return "rigid-rotation";
    case MotionPreset::kArticulated: return "articulated-two-part";
  }
  throw ConfigError("unknown motion preset");
}

MotionPreset preset_from_name(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), '_', '-');
  if (s == "static") return MotionPreset::kStatic;
  if (s == "rigid-rotation" || s == "rigid") return MotionPreset::kRigidRotation;
  if (s == "articulated-two-part" || s == "articulated") return MotionPreset::kArticulated;
  throw ConfigError("unknown motion preset '" + name + "'");
}

void SceneConfig::validate() const {
  if (gaussian_count <= 0) throw ConfigError("gaussian_count must be positive");
  if (frame_count < 3) throw ConfigError("frame_count must be at least 3");
  if (orbit_radius <= 0.0) throw ConfigError("orbit_radius must be positive");
  if (step_deg <= 0.0) throw ConfigError("step_deg must be positive");
  if (occlusion_fraction < 0.0 || occlusion_fraction >= 1.0)
    throw ConfigError("occlusion_fraction must lie in [0, 1)");
  if (image_width <= 0 || image_height <= 0)
    throw ConfigError("image size must be positive");
  if (scale_min <= 0.0 || scale_max < scale_min)
    throw ConfigError("invalid Gaussian scale range");
  if (opacity_min < 0.0 || opacity_max > 1.0 || opacity_max < opacity_min)
    throw ConfigError("invalid opacity range");
  if (std::abs(eval_elevation_deg) >= 90.0 || std::abs(input_elevation_deg) >= 90.0)
    throw ConfigError("camera elevation must lie strictly between -90 and 90 degrees");
}

bool SyntheticScene::visible_at(int gaussian, int frame) const {
  for (const auto& iv : occlusion[gaussian])
    if (frame >= iv.begin && frame < iv.end) return false;
  return true;
}

std::vector<uint8_t> SyntheticScene::visibility_mask(int frame) const {
  std::vector<uint8_t> mask(truth.size(), 1);
  for (size_t i = 0; i < truth.size(); ++i)
    mask[i] = visible_at(static_cast<int>(i), frame) ? 1 : 0;
  return mask;
}

namespace {

constexpr double kDegToRad = M_PI / 180.0;

Vec3 orbit_eye(const Vec3& center, double radius, double azimuth_deg, double elevation_deg) {
  const double a = azimuth_deg * kDegToRad;
  const double e = elevation_deg * kDegToRad;
  return center + radius * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a),
                                std::sin(e));
}

// Rigid sweep about an axis through the origin, applied to base states.
void apply_rotation_track(GaussianTrajectory* traj, const Vec3& axis, double rate_deg,
                          int frames) {
  const Vec3 p0 = traj->positions[0];
  const Vec4 q0 = traj->rotations[0];
  for (int t = 1; t < frames; ++t) {
    const Vec4 r = quat_from_axis_angle(axis, rate_deg * kDegToRad * t);
    traj->positions[t] = qrotate(r, p0);
    traj->rotations[t] = qmul(r, q0);
  }
}

}  // namespace

SyntheticScene make_orbit_scene(const SceneConfig& config) {
  config.validate();
  const int n = config.gaussian_count;
  const int frames = config.frame_count;
  Rng rng(config.seed);

  SyntheticScene scene;
  scene.frame_count = frames;
  scene.seed = config.seed;
  scene.truth.resize(n);
  scene.occlusion.resize(n);

  // Object of unit diameter centered at the origin.  The articulated preset
  // splits it into two half-size clusters that meet at the origin hinge.
  const bool articulated = config.preset == MotionPreset::kArticulated;
  for (int i = 0; i < n; ++i) {
    GaussianTrajectory& g = scene.truth[i];
    Vec3 p;
    if (articulated) {
      const bool first = i < n / 2;
      const Vec3 center(first ? -0.25 : 0.25, 0.0, 0.0);
      p = center + rng.ball(0.25);
    } else {
      p = rng.ball(0.5);
    }
    const Vec4 q = rng.unit_quaternion();
    g.positions.assign(frames, p);
    g.rotations.assign(frames, q);
    g.scale = Vec3(rng.uniform(config.scale_min, config.scale_max),
                   rng.uniform(config.scale_min, config.scale_max),
                   rng.uniform(config.scale_min, config.scale_max));
    g.opacity = rng.uniform(config.opacity_min, config.opacity_max);
    g.color = Vec3(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
                   rng.uniform(0.05, 0.95));
  }

  switch (config.preset) {
    case MotionPreset::kStatic:
      break;
    case MotionPreset::kRigidRotation: {
      const Vec3 axis = rng.unit_vector();
      for (int i = 0; i < n; ++i)
        apply_rotation_track(&scene.truth[i], axis, config.rotation_deg_per_frame, frames);
      break;
    }
    case MotionPreset::kArticulated: {
      const Vec3 hinge(0.0, 0.0, 1.0);
      for (int i = 0; i < n; ++i) {
        const double rate =
            i < n / 2 ? config.articulated_rate_a_deg : config.articulated_rate_b_deg;
        apply_rotation_track(&scene.truth[i], hinge, rate, frames);
      }
      break;
    }
  }

  // Occlusion schedule: a fixed count of Gaussians each get one interval.
  const int occluded = static_cast<int>(std::llround(config.occlusion_fraction * n));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = 0; i < occluded; ++i) {
    const int j = rng.uniform_int(i, n - 1);
    std::swap(order[i], order[j]);
  }
  int min_len = config.occlusion_min_frames > 0 ? config.occlusion_min_frames
                                                : std::max(3, frames / 6);
  min_len = std::min(min_len, frames - 1);
  int max_len = config.occlusion_max_frames > 0 ? config.occlusion_max_frames
                                                : std::max(min_len, frames / 3);
  max_len = std::min(std::max(max_len, min_len), frames - 1);
  for (int k = 0; k < occluded; ++k) {
    const int len = rng.uniform_int(min_len, max_len);
    const int begin = rng.uniform_int(1, frames - len);  // keep frame 0 visible
    scene.occlusion[order[k]].push_back({begin, begin + len});
  }

  // Cameras aim at the first-frame centroid.
  Vec3 centroid = Vec3::Zero();
  for (const auto& g : scene.truth) centroid += g.positions[0];
  centroid /= n;
  scene.look_target = centroid;

  const double focal = config.focal_px > 0.0 ? config.focal_px : 2.0 * config.image_width;
  scene.input_cameras.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    const Vec3 eye = orbit_eye(centroid, config.orbit_radius, config.step_deg * t,
                               config.input_elevation_deg);
    scene.input_cameras.push_back(
        look_at_camera(eye, centroid, focal, config.image_width, config.image_height));
  }
  for (double offset : config.eval_offsets_deg) {
    const Vec3 eye =
        orbit_eye(centroid, config.orbit_radius, offset, config.eval_elevation_deg);
    scene.eval_cameras.push_back(
        look_at_camera(eye, centroid, focal, config.image_width, config.image_height));
    scene.eval_offsets_deg.push_back(offset);
  }
  return scene;
}

namespace {

json camera_to_json(const Camera& c) {
  json j;
  j["fx"] = c.fx;
  j["fy"] = c.fy;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  std::vector<double> r(9);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r[row * 3 + col] = c.R_wc(row, col);
  j["R_wc"] = r;
  j["t_wc"] = {c.t_wc[0], c.t_wc[1], c.t_wc[2]};
  j["width"] = c.width;
  j["height"] = c.height;
  return j;
}

Camera camera_from_json(const json& j) {
  Camera c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  const auto r = j.at("R_wc").get<std::vector<double>>();
  if (r.size() != 9) throw IoError("camera R_wc must have 9 entries");
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) c.R_wc(row, col) = r[row * 3 + col];
  const auto t = j.at("t_wc").get<std::vector<double>>();
  if (t.size() != 3) throw IoError("camera t_wc must have 3 entries");
  c.t_wc = Vec3(t[0], t[1], t[2]);
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

json vec3_to_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }
json vec4_to_json(const Vec4& v) { return json::array({v[0], v[1], v[2], v[3]}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Vec4 vec4_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw IoError("expected 4-vector");
  return Vec4(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
              j[3].get<double>());
}

json trajectory_to_json(const GaussianTrajectory& g) {
  json jg;
  json p = json::array();
  json q = json::array();
  for (int t = 0; t < g.frames(); ++t) {
    p.push_back(vec3_to_json(g.positions[t]));
    q.push_back(vec4_to_json(g.rotations[t]));
  }
  jg["p"] = std::move(p);
  jg["q"] = std::move(q);
  jg["s"] = vec3_to_json(g.scale);
  jg["alpha"] = g.opacity;
  jg["c"] = vec3_to_json(g.color);
  return jg;
}

GaussianTrajectory trajectory_from_json(const json& jg) {
  GaussianTrajectory g;
  for (const auto& jp : jg.at("p")) g.positions.push_back(vec3_from_json(jp));
  for (const auto& jq : jg.at("q")) g.rotations.push_back(vec4_from_json(jq));
  if (g.positions.size() != g.rotations.size())
    throw IoError("trajectory p/q length mismatch");
  g.scale = vec3_from_json(jg.at("s"));
  g.opacity = jg.at("alpha").get<double>();
  g.color = vec3_from_json(jg.at("c"));
  return g;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string serialize_scene(const SyntheticScene& scene, const std::string& config_hash) {
  json j;
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["seed"] = scene.seed;
  j["T"] = scene.frame_count;
  j["canonical_frame"] = 0;
  j["look_target"] = vec3_to_json(scene.look_target);
  json gaussians = json::array();
  for (size_t i = 0; i < scene.truth.size(); ++i) {
    json jg = trajectory_to_json(scene.truth[i]);
    json occ = json::array();
    for (const auto& iv : scene.occlusion[i]) occ.push_back({iv.begin, iv.end});
    jg["occlusion"] = std::move(occ);
    gaussians.push_back(std::move(jg));
  }
  j["gaussians"] = std::move(gaussians);
  json inputs = json::array();
  for (const auto& c : scene.input_cameras) inputs.push_back(camera_to_json(c));
  j["input_cameras"] = std::move(inputs);
  json evals = json::array();
  for (size_t k = 0; k < scene.eval_cameras.size(); ++k) {
    json jc = camera_to_json(scene.eval_cameras[k]);
    jc["offset_deg"] = scene.eval_offsets_deg[k];
    evals.push_back(std::move(jc));
  }
  j["eval_cameras"] = std::move(evals);
  return j.dump();
}

SyntheticScene deserialize_scene(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("scene parse error: ") + e.what());
  }
  SyntheticScene scene;
  scene.seed = j.at("seed").get<uint64_t>();
  scene.frame_count = j.at("T").get<int>();
  scene.look_target = vec3_from_json(j.at("look_target"));
  for (const auto& jg : j.at("gaussians")) {
    scene.truth.push_back(trajectory_from_json(jg));
    std::vector<OcclusionInterval> occ;
    for (const auto& jo : jg.at("occlusion"))
      occ.push_back({jo.at(0).get<int>(), jo.at(1).get<int>()});
    scene.occlusion.push_back(std::move(occ));
  }
  for (const auto& jc : j.at("input_cameras"))
    scene.input_cameras.push_back(camera_from_json(jc));
  for (const auto& jc : j.at("eval_cameras")) {
    scene.eval_cameras.push_back(camera_from_json(jc));
    scene.eval_offsets_deg.push_back(jc.at("offset_deg").get<double>());
  }
  if (static_cast<int>(scene.input_cameras.size()) != scene.frame_count)
    throw IoError("scene input camera count does not match T");
  return scene;
}

void save_scene(const SyntheticScene& scene, const std::string& path,
                const std::string& config_hash) {
  write_text_file(path, serialize_scene(scene, config_hash));
}

SyntheticScene load_scene(const std::string& path) {
  return deserialize_scene(read_text_file(path));
}

std::string serialize_model(const Model& model, const std::string& provenance,
                            const std::string& config_hash) {
  json j;
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["provenance"] = provenance;
  j["T"] = model_frames(model);
  j["canonical_frame"] = 0;
  json gaussians = json::array();
  for (const auto& g : model) gaussians.push_back(trajectory_to_json(g));
  j["gaussians"] = std::move(gaussians);
  return j.dump();
}

Model deserialize_model(const std::string& text, std::string* provenance,
                        std::string* config_hash) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("model parse error: ") + e.what());
  }
  Model model;
  for (const auto& jg : j.at("gaussians")) model.push_back(trajectory_from_json(jg));
  if (provenance) *provenance = j.value("provenance", "");
  if (config_hash) *config_hash = j.value("config_hash", "");
  return model;
}

void save_model(const Model& model, const std::string& path, const std::string& provenance,
                const std::string& config_hash) {
  write_text_file(path, serialize_model(model, provenance, config_hash));
}

Model load_model(const std::string& path, std::string* provenance,
                 std::string* config_hash) {
  return deserialize_model(read_text_file(path), provenance, config_hash);
}

void model_bounds(const Model& model, Vec3* lo, Vec3* hi) {
  if (model.empty()) throw ShapeError("model_bounds on empty model");
  *lo = Vec3::Constant(std::numeric_limits<double>::max());
  *hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  for (const auto& g : model)
    for (const auto& p : g.positions) {
      *lo = lo->cwiseMin(p);
      *hi = hi->cwiseMax(p);
    }
}

}  // namespace usplat
