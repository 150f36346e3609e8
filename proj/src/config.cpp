#include "usplat/config.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <set>
#include <sstream>

namespace usplat {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void read_value(const json& v, const std::string& path, double* out) {
  require(v.is_number(), path + " must be a number");
  *out = v.get<double>();
}

void read_value(const json& v, const std::string& path, int* out) {
  require(v.is_number_integer(), path + " must be an integer");
  *out = v.get<int>();
}

void read_value(const json& v, const std::string& path, uint64_t* out) {
  require(v.is_number_integer() && (v.is_number_unsigned() || v.get<int64_t>() >= 0),
          path + " must be a non-negative integer");
  *out = v.get<uint64_t>();
}

void read_value(const json& v, const std::string& path, bool* out) {
  require(v.is_boolean(), path + " must be a boolean");
  *out = v.get<bool>();
}

void read_value(const json& v, const std::string& path, std::string* out) {
  require(v.is_string(), path + " must be a string");
  *out = v.get<std::string>();
}

void read_value(const json& v, const std::string& path, Vec3* out) {
  require(v.is_array() && v.size() == 3, path + " must be an array of 3 numbers");
  for (int c = 0; c < 3; ++c) {
    require(v[c].is_number(), path + " must be an array of 3 numbers");
    (*out)[c] = v[c].get<double>();
  }
}

void read_value(const json& v, const std::string& path, std::vector<double>* out) {
  require(v.is_array(), path + " must be an array of numbers");
  out->clear();
  for (const auto& e : v) {
    require(e.is_number(), path + " must be an array of numbers");
    out->push_back(e.get<double>());
  }
}

void read_value(const json& v, const std::string& path, MotionPreset* out) {
  std::string name;
  read_value(v, path, &name);
  *out = preset_from_name(name);
}

void read_value(const json& v, const std::string& path, SnapshotSource* out) {
  std::string name;
  read_value(v, path, &name);
  *out = snapshot_source_from_name(name);
}

void read_value(const json& v, const std::string& path, OptimizeMode* out) {
  std::string name;
  read_value(v, path, &name);
  *out = optimize_mode_from_name(name);
}

// Tracks which keys a section consumed so leftovers can be rejected by path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    require(j.is_object(), (path_.empty() ? std::string("config") : path_) +
                               " must be an object");
  }

  template <typename T>
  void get(const char* key, T* out) {
    consumed_.insert(key);
    const auto it = j_->find(key);
    if (it == j_->end()) return;
    read_value(*it, join(key), out);
  }

  // Returns the child object for a subsection, or nullptr if absent.
  const json* child(const char* key) {
    consumed_.insert(key);
    const auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  std::string join(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

  void finish() const {
    for (const auto& item : j_->items())
      if (!consumed_.count(item.key()))
        throw ConfigError("unknown config key: " +
                          (path_.empty() ? item.key() : path_ + "." + item.key()));
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> consumed_;
};

void parse_scene(const json& j, SceneConfig* out) {
  Reader r(j, "scene");
  r.get("gaussian_count", &out->gaussian_count);
  r.get("frame_count", &out->frame_count);
  r.get("orbit_radius", &out->orbit_radius);
  r.get("step_deg", &out->step_deg);
  r.get("input_elevation_deg", &out->input_elevation_deg);
  r.get("eval_offsets_deg", &out->eval_offsets_deg);
  r.get("eval_elevation_deg", &out->eval_elevation_deg);
  r.get("preset", &out->preset);
  r.get("occlusion_fraction", &out->occlusion_fraction);
  r.get("image_width", &out->image_width);
  r.get("image_height", &out->image_height);
  r.get("focal_px", &out->focal_px);
  r.get("rotation_deg_per_frame", &out->rotation_deg_per_frame);
  r.get("articulated_rate_a_deg", &out->articulated_rate_a_deg);
  r.get("articulated_rate_b_deg", &out->articulated_rate_b_deg);
  r.get("occlusion_min_frames", &out->occlusion_min_frames);
  r.get("occlusion_max_frames", &out->occlusion_max_frames);
  r.get("scale_min", &out->scale_min);
  r.get("scale_max", &out->scale_max);
  r.get("opacity_min", &out->opacity_min);
  r.get("opacity_max", &out->opacity_max);
  r.finish();
}

void parse_render(const json& j, RenderOptions* out) {
  Reader r(j, "render");
  r.get("near_plane", &out->near_plane);
  r.get("weight_floor", &out->weight_floor);
  r.get("alpha_clamp", &out->alpha_clamp);
  r.get("eig_floor", &out->eig_floor);
  r.get("background", &out->background);
  r.finish();
}

void parse_uncertainty(const json& j, UncertaintyParams* out) {
  Reader r(j, "uncertainty");
  r.get("eta_c", &out->eta_c);
  r.get("phi", &out->phi);
  r.get("r", &out->r);
  r.get("fractional_indicator", &out->fractional_indicator);
  r.get("indicator_fraction", &out->indicator_fraction);
  r.finish();
}

void parse_graph(const json& j, GraphParams* out) {
  Reader r(j, "graph");
  r.get("key_fraction", &out->key_fraction);
  r.get("voxel_divisor", &out->voxel_divisor);
  r.get("min_period", &out->min_period);
  r.get("k", &out->k);
  r.get("inverse_metric", &out->inverse_metric);
  r.get("longest_run_period", &out->longest_run_period);
  r.finish();
}

void parse_loss(const json& j, LossWeights* out) {
  Reader r(j, "loss");
  r.get("lambda_iso", &out->lambda_iso);
  r.get("lambda_rigid", &out->lambda_rigid);
  r.get("lambda_rot", &out->lambda_rot);
  r.get("lambda_vel", &out->lambda_vel);
  r.get("lambda_acc", &out->lambda_acc);
  r.get("delta", &out->delta);
  r.get("lambda_rgb_l1", &out->lambda_rgb_l1);
  r.get("lambda_rgb_ssim", &out->lambda_rgb_ssim);
  r.get("norm_eps", &out->norm_eps);
  r.get("nonkey_sum_all_nodes", &out->nonkey_sum_all_nodes);
  r.finish();
}

void parse_pretrain(const json& j, PretrainConfig* out) {
  Reader r(j, "pretrain");
  r.get("mode", &out->mode);
  r.get("iterations", &out->iterations);
  r.get("batch_size", &out->batch_size);
  r.get("init_noise", &out->init_noise);
  r.get("k", &out->k);
  r.get("walk_sigma", &out->drift.walk_sigma);
  r.get("global_noise", &out->drift.global_noise);
  r.get("axis_weights", &out->drift.axis_weights);
  r.finish();
}

void parse_optimize(const json& j, OptimizeConfig* out) {
  Reader r(j, "optimize");
  r.get("iterations", &out->schedule.iterations);
  r.get("batch_size", &out->schedule.batch_size);
  r.get("head_fraction", &out->schedule.head_fraction);
  r.get("tail_fraction", &out->schedule.tail_fraction);
  r.get("lr_position", &out->adam.lr_position);
  r.get("lr_rotation", &out->adam.lr_rotation);
  r.get("lr_color", &out->adam.lr_color);
  r.get("lr_opacity", &out->adam.lr_opacity);
  r.get("beta1", &out->adam.beta1);
  r.get("beta2", &out->adam.beta2);
  r.get("adam_eps", &out->adam.eps);
  r.get("mode", &out->mode);
  r.get("vanilla_k", &out->vanilla_k);
  r.finish();
}

void parse_eval(const json& j, EvalConfig* out) {
  Reader r(j, "eval");
  r.get("pck_fractions", &out->pck_fractions);
  r.get("pck_absolute", &out->pck_absolute);
  r.finish();
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

}  // namespace

PipelineConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig out;
  Reader root(j, "");
  root.get("seed", &out.seed);
  if (const json* s = root.child("scene")) parse_scene(*s, &out.scene);
  if (const json* s = root.child("render")) parse_render(*s, &out.render);
  if (const json* s = root.child("uncertainty")) parse_uncertainty(*s, &out.uncertainty);
  if (const json* s = root.child("graph")) parse_graph(*s, &out.graph);
  if (const json* s = root.child("loss")) parse_loss(*s, &out.loss);
  if (const json* s = root.child("pretrain")) parse_pretrain(*s, &out.pretrain);
  if (const json* s = root.child("optimize")) parse_optimize(*s, &out.optimize);
  if (const json* s = root.child("eval")) parse_eval(*s, &out.eval);
  root.finish();
  out.validate();
  return out;
}

std::string serialize_config(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;

  json& s = j["scene"];
  s["gaussian_count"] = c.scene.gaussian_count;
  s["frame_count"] = c.scene.frame_count;
  s["orbit_radius"] = c.scene.orbit_radius;
  s["step_deg"] = c.scene.step_deg;
  s["input_elevation_deg"] = c.scene.input_elevation_deg;
  s["eval_offsets_deg"] = c.scene.eval_offsets_deg;
  s["eval_elevation_deg"] = c.scene.eval_elevation_deg;
  s["preset"] = preset_name(c.scene.preset);
  s["occlusion_fraction"] = c.scene.occlusion_fraction;
  s["image_width"] = c.scene.image_width;
  s["image_height"] = c.scene.image_height;
  s["focal_px"] = c.scene.focal_px;
  s["rotation_deg_per_frame"] = c.scene.rotation_deg_per_frame;
  s["articulated_rate_a_deg"] = c.scene.articulated_rate_a_deg;
  s["articulated_rate_b_deg"] = c.scene.articulated_rate_b_deg;
  s["occlusion_min_frames"] = c.scene.occlusion_min_frames;
  s["occlusion_max_frames"] = c.scene.occlusion_max_frames;
  s["scale_min"] = c.scene.scale_min;
  s["scale_max"] = c.scene.scale_max;
  s["opacity_min"] = c.scene.opacity_min;
  s["opacity_max"] = c.scene.opacity_max;

  json& r = j["render"];
  r["near_plane"] = c.render.near_plane;
  r["weight_floor"] = c.render.weight_floor;
  r["alpha_clamp"] = c.render.alpha_clamp;
  r["eig_floor"] = c.render.eig_floor;
  r["background"] = vec_json(c.render.background);

  json& u = j["uncertainty"];
  u["eta_c"] = c.uncertainty.eta_c;
  u["phi"] = c.uncertainty.phi;
  u["r"] = vec_json(c.uncertainty.r);
  u["fractional_indicator"] = c.uncertainty.fractional_indicator;
  u["indicator_fraction"] = c.uncertainty.indicator_fraction;

  json& g = j["graph"];
  g["key_fraction"] = c.graph.key_fraction;
  g["voxel_divisor"] = c.graph.voxel_divisor;
  g["min_period"] = c.graph.min_period;
  g["k"] = c.graph.k;
  g["inverse_metric"] = c.graph.inverse_metric;
  g["longest_run_period"] = c.graph.longest_run_period;

  json& l = j["loss"];
  l["lambda_iso"] = c.loss.lambda_iso;
  l["lambda_rigid"] = c.loss.lambda_rigid;
  l["lambda_rot"] = c.loss.lambda_rot;
  l["lambda_vel"] = c.loss.lambda_vel;
  l["lambda_acc"] = c.loss.lambda_acc;
  l["delta"] = c.loss.delta;
  l["lambda_rgb_l1"] = c.loss.lambda_rgb_l1;
  l["lambda_rgb_ssim"] = c.loss.lambda_rgb_ssim;
  l["norm_eps"] = c.loss.norm_eps;
  l["nonkey_sum_all_nodes"] = c.loss.nonkey_sum_all_nodes;

  json& p = j["pretrain"];
  p["mode"] = snapshot_source_name(c.pretrain.mode);
  p["iterations"] = c.pretrain.iterations;
  p["batch_size"] = c.pretrain.batch_size;
  p["init_noise"] = c.pretrain.init_noise;
  p["k"] = c.pretrain.k;
  p["walk_sigma"] = c.pretrain.drift.walk_sigma;
  p["global_noise"] = c.pretrain.drift.global_noise;
  p["axis_weights"] = vec_json(c.pretrain.drift.axis_weights);

  json& o = j["optimize"];
  o["iterations"] = c.optimize.schedule.iterations;
  o["batch_size"] = c.optimize.schedule.batch_size;
  o["head_fraction"] = c.optimize.schedule.head_fraction;
  o["tail_fraction"] = c.optimize.schedule.tail_fraction;
  o["lr_position"] = c.optimize.adam.lr_position;
  o["lr_rotation"] = c.optimize.adam.lr_rotation;
  o["lr_color"] = c.optimize.adam.lr_color;
  o["lr_opacity"] = c.optimize.adam.lr_opacity;
  o["beta1"] = c.optimize.adam.beta1;
  o["beta2"] = c.optimize.adam.beta2;
  o["adam_eps"] = c.optimize.adam.eps;
  o["mode"] = optimize_mode_name(c.optimize.mode);
  o["vanilla_k"] = c.optimize.vanilla_k;

  json& e = j["eval"];
  e["pck_fractions"] = c.eval.pck_fractions;
  e["pck_absolute"] = c.eval.pck_absolute;

  return j.dump(2);
}

std::string config_hash(const PipelineConfig& config) {
  const uint64_t h = fnv1a64(serialize_config(config));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string apply_override(const std::string& json_text, const std::string& path,
                           const std::string& value) {
  const PipelineConfig base = parse_config(json_text);
  json full = json::parse(serialize_config(base));

  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  require(!parts.empty(), "empty override path");

  json* node = &full;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    const auto it = node->find(parts[i]);
    require(it != node->end() && it->is_object(), "unknown config key: " + path);
    node = &*it;
  }
  const auto leaf = node->find(parts.back());
  require(leaf != node->end(), "unknown config key: " + path);
  require(!leaf->is_object(), "cannot override a whole section: " + path);

  json parsed;
  if (json::accept(value)) {
    parsed = json::parse(value);
  } else {
    parsed = value;
  }
  *leaf = parsed;

  const std::string out = full.dump(2);
  parse_config(out);  // reject type mismatches and invalid values here
  return out;
}

void PipelineConfig::validate() const {
  scene.validate();
  require(render.near_plane > 0, "render.near_plane must be positive");
  require(render.weight_floor >= 0, "render.weight_floor must be non-negative");
  require(render.alpha_clamp > 0 && render.alpha_clamp < 1,
          "render.alpha_clamp must be in (0, 1)");
  require(render.eig_floor >= 0, "render.eig_floor must be non-negative");
  for (int c = 0; c < 3; ++c)
    require(render.background[c] >= 0 && render.background[c] <= 1,
            "render.background components must be in [0, 1]");

  require(uncertainty.eta_c > 0, "uncertainty.eta_c must be positive");
  require(uncertainty.phi > 0, "uncertainty.phi must be positive");
  for (int c = 0; c < 3; ++c)
    require(uncertainty.r[c] > 0, "uncertainty.r components must be positive");
  require(uncertainty.indicator_fraction > 0 && uncertainty.indicator_fraction <= 1,
          "uncertainty.indicator_fraction must be in (0, 1]");

  require(graph.key_fraction > 0 && graph.key_fraction < 1,
          "graph.key_fraction must be in (0, 1)");
  require(graph.voxel_divisor > 0, "graph.voxel_divisor must be positive");
  require(graph.min_period >= 1, "graph.min_period must be at least 1");
  require(graph.k >= 1, "graph.k must be at least 1");

  require(loss.lambda_iso >= 0 && loss.lambda_rigid >= 0 && loss.lambda_rot >= 0 &&
              loss.lambda_vel >= 0 && loss.lambda_acc >= 0,
          "loss weights must be non-negative");
  require(loss.delta >= 1, "loss.delta must be at least 1");
  require(loss.lambda_rgb_l1 >= 0 && loss.lambda_rgb_ssim >= 0,
          "loss.lambda_rgb_l1 and loss.lambda_rgb_ssim must be non-negative");
  require(loss.norm_eps >= 0, "loss.norm_eps must be non-negative");

  require(pretrain.iterations >= 0, "pretrain.iterations must be non-negative");
  require(pretrain.batch_size >= 1, "pretrain.batch_size must be at least 1");
  require(pretrain.init_noise >= 0, "pretrain.init_noise must be non-negative");
  require(pretrain.k >= 1, "pretrain.k must be at least 1");
  require(pretrain.drift.walk_sigma >= 0, "pretrain.walk_sigma must be non-negative");
  require(pretrain.drift.global_noise >= 0, "pretrain.global_noise must be non-negative");
  for (int c = 0; c < 3; ++c)
    require(pretrain.drift.axis_weights[c] >= 0,
            "pretrain.axis_weights components must be non-negative");

  require(optimize.schedule.iterations >= 0, "optimize.iterations must be non-negative");
  require(optimize.schedule.batch_size >= 1, "optimize.batch_size must be at least 1");
  require(optimize.schedule.head_fraction >= 0 && optimize.schedule.tail_fraction >= 0 &&
              optimize.schedule.head_fraction + optimize.schedule.tail_fraction <= 1,
          "optimize head and tail fractions must be non-negative and sum to at most 1");
  require(optimize.adam.lr_position > 0 && optimize.adam.lr_rotation > 0 &&
              optimize.adam.lr_color > 0 && optimize.adam.lr_opacity > 0,
          "optimize learning rates must be positive");
  require(optimize.adam.beta1 >= 0 && optimize.adam.beta1 < 1 &&
              optimize.adam.beta2 >= 0 && optimize.adam.beta2 < 1,
          "optimize.beta1 and optimize.beta2 must be in [0, 1)");
  require(optimize.adam.eps > 0, "optimize.adam_eps must be positive");
  require(optimize.vanilla_k >= 1, "optimize.vanilla_k must be at least 1");

  for (double f : eval.pck_fractions)
    require(f > 0, "eval.pck_fractions entries must be positive");
  for (double a : eval.pck_absolute)
    require(a > 0, "eval.pck_absolute entries must be positive");
}

}  // namespace usplat
