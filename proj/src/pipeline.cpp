#include "usplat/pipeline.hpp"

#include "usplat/eval.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace usplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path);
}

// Config stamp embedded in a JSON artifact.
std::string artifact_stamp(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError(path + " is not valid JSON: " + e.what());
  }
  return j.value("config_hash", std::string());
}

void reset_dir(const std::string& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir);
}

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.ppm", t);
  return buf;
}

std::string history_csv(const std::vector<LossReport>& history) {
  if (history.empty()) return "iteration,total\n";
  std::string out = loss_report_csv_header(history.front());
  for (size_t i = 0; i < history.size(); ++i)
    out += loss_report_csv_row(static_cast<int>(i), history[i]);
  return out;
}

int parse_int(const std::string& text) {
  size_t used = 0;
  int value = 0;
  try {
    value = std::stoi(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("invalid frame spec: " + text);
  }
  if (used != text.size()) throw ConfigError("invalid frame spec: " + text);
  return value;
}

std::vector<int> parse_frames(const std::string& spec, int frame_count) {
  std::vector<int> frames;
  int lo = 0, hi = 0;
  if (spec.empty() || spec == "all") {
    lo = 0;
    hi = frame_count - 1;
  } else if (const size_t dash = spec.find('-'); dash != std::string::npos) {
    lo = parse_int(spec.substr(0, dash));
    hi = parse_int(spec.substr(dash + 1));
  } else {
    lo = hi = parse_int(spec);
  }
  if (lo < 0 || hi < lo || hi >= frame_count)
    throw ConfigError("frame spec " + spec + " is outside 0.." +
                      std::to_string(frame_count - 1));
  for (int t = lo; t <= hi; ++t) frames.push_back(t);
  return frames;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, PipelineOptions options)
    : config_(std::move(config)), options_(std::move(options)) {
  if (options_.out_dir.empty()) throw ConfigError("no output directory set");
  if (options_.threads < 1) throw ConfigError("thread count must be at least 1");
  config_.validate();
  hash_ = config_hash(config_);
}

std::string Pipeline::path(const std::string& name) const {
  return options_.out_dir + "/" + name;
}

std::string Pipeline::require_artifact(const std::string& name, const std::string& stage,
                                       const std::string& producer) const {
  const std::string p = path(name);
  if (!fs::exists(p))
    throw DependencyError("stage " + stage + " requires output of stage " + producer +
                          " (missing " + p + ")");
  return p;
}

SyntheticScene Pipeline::load_scene_artifact(const std::string& stage) const {
  return load_scene(require_artifact("scene.json", stage, "gen"));
}

std::vector<Image> Pipeline::load_gt_images(int frame_count, const std::string& stage) const {
  std::vector<Image> images;
  images.reserve(frame_count);
  for (int t = 0; t < frame_count; ++t)
    images.push_back(read_ppm(require_artifact("gt_input/" + frame_name(t), stage, "gen")));
  return images;
}

Model Pipeline::load_snapshot(const std::string& stage) const {
  return load_model(require_artifact("snapshot.json", stage, "pretrain"));
}

void Pipeline::write_config() const {
  fs::create_directories(options_.out_dir);
  write_text(path("config.json"), serialize_config(config_));
}

void Pipeline::run_gen() {
  write_config();
  SceneConfig sc = config_.scene;
  sc.seed = derive_seed(config_.seed, "gen");
  const SyntheticScene scene = make_orbit_scene(sc);
  save_scene(scene, path("scene.json"), hash_);

  const std::string dir = path("gt_input");
  reset_dir(dir);
  const std::string comment = "config_hash=" + hash_;
  parallel_for(scene.frame_count, options_.threads, [&](int begin, int end) {
    for (int t = begin; t < end; ++t) {
      const auto states = states_at(scene.truth, t);
      const auto mask = scene.visibility_mask(t);
      const FrameRender fr =
          render_frame(states, scene.input_cameras[t], config_.render, &mask);
      write_ppm(fr.image, dir + "/" + frame_name(t), comment);
    }
  });
}

void Pipeline::run_pretrain() {
  write_config();
  const SyntheticScene scene = load_scene_artifact("pretrain");
  const uint64_t seed = derive_seed(config_.seed, "pretrain");
  if (config_.pretrain.mode == SnapshotSource::kVanilla) {
    const auto images = load_gt_images(scene.frame_count, "pretrain");
    const OptimizeResult result =
        pretrain_vanilla(scene, images, config_.pretrain, config_.loss,
                         config_.optimize.adam, config_.render, seed, options_.threads);
    save_model(result.model, path("snapshot.json"), "pretrain:vanilla", hash_);
    write_text(path("pretrain_losses.csv"), history_csv(result.history));
  } else {
    const Model model = simulate_pretrained_drift(scene, config_.pretrain.drift, seed);
    save_model(model, path("snapshot.json"), "pretrain:drift", hash_);
    std::error_code ec;
    fs::remove(path("pretrain_losses.csv"), ec);
  }
}

void Pipeline::run_uncert() {
  write_config();
  const SyntheticScene scene = load_scene_artifact("uncert");
  const Model snapshot = load_snapshot("uncert");
  const auto images = load_gt_images(scene.frame_count, "uncert");
  std::vector<std::vector<uint8_t>> masks(scene.frame_count);
  for (int t = 0; t < scene.frame_count; ++t) masks[t] = scene.visibility_mask(t);
  const UncertaintyField field =
      estimate_field(snapshot, scene.input_cameras, images, config_.render,
                     config_.uncertainty, &masks, options_.threads);
  save_field(field, path("field.json"), hash_);
}

void Pipeline::run_graph() {
  write_config();
  const SyntheticScene scene = load_scene_artifact("graph");
  const Model snapshot = load_snapshot("graph");
  require_artifact("field.json", "graph", "uncert");
  const UncertaintyField field = load_field(path("field.json"));
  const MotionGraph graph =
      build_motion_graph(snapshot, field, scene.input_cameras, config_.graph);
  save_graph(graph, path("graph.json"), hash_);
}

void Pipeline::run_optimize() {
  write_config();
  const SyntheticScene scene = load_scene_artifact("optimize");
  const Model snapshot = load_snapshot("optimize");
  const auto images = load_gt_images(scene.frame_count, "optimize");

  UncertaintyField field;
  MotionGraph graph;
  const UncertaintyField* field_ptr = nullptr;
  const MotionGraph* graph_ptr = nullptr;
  if (config_.optimize.mode == OptimizeMode::kUncertaintyAware) {
    require_artifact("field.json", "optimize", "uncert");
    field = load_field(path("field.json"));
    field_ptr = &field;
    require_artifact("graph.json", "optimize", "graph");
    graph = load_graph(path("graph.json"));
    graph_ptr = &graph;
  }

  const uint64_t seed = derive_seed(config_.seed, "optimize");
  const OptimizeResult result =
      optimize_model(snapshot, snapshot, field_ptr, graph_ptr, scene, images,
                     config_.optimize, config_.loss, config_.render, seed, options_.threads);
  save_model(result.model, path("checkpoint.json"),
             "optimize:" + optimize_mode_name(config_.optimize.mode), hash_);
  write_text(path("losses.csv"), history_csv(result.history));
  write_text(path("optimizer_state.json"), serialize_optimizer_state(result.state, hash_));
}

void Pipeline::run_render(const std::string& source, const std::string& cameras,
                          const std::string& frames, const std::string& out_subdir) {
  write_config();
  const SyntheticScene scene = load_scene_artifact("render");

  Model model;
  if (source == "checkpoint") {
    model = load_model(require_artifact("checkpoint.json", "render", "optimize"));
  } else if (source == "snapshot") {
    model = load_snapshot("render");
  } else if (source == "truth") {
    model = scene.truth;
  } else {
    throw ConfigError("unknown render source " + source +
                      " (expected checkpoint, snapshot, or truth)");
  }

  const std::vector<int> picks = parse_frames(frames, scene.frame_count);
  const std::string sub = out_subdir.empty() ? source + "_" + cameras : out_subdir;
  const std::string dir = path("renders/" + sub);
  fs::create_directories(path("renders"));
  reset_dir(dir);
  const std::string comment = "config_hash=" + hash_;
  const int n = static_cast<int>(picks.size());

  if (cameras == "input") {
    parallel_for(n, options_.threads, [&](int begin, int end) {
      for (int f = begin; f < end; ++f) {
        const int t = picks[f];
        const FrameRender fr =
            render_frame(states_at(model, t), scene.input_cameras[t], config_.render);
        write_ppm(fr.image, dir + "/" + frame_name(t), comment);
      }
    });
  } else if (cameras == "eval") {
    const int views = static_cast<int>(scene.eval_cameras.size());
    parallel_for(views * n, options_.threads, [&](int begin, int end) {
      for (int job = begin; job < end; ++job) {
        const int v = job / n;
        const int t = picks[job % n];
        const FrameRender fr =
            render_frame(states_at(model, t), scene.eval_cameras[v], config_.render);
        char buf[48];
        std::snprintf(buf, sizeof(buf), "cam%02d_frame_%04d.ppm", v, t);
        write_ppm(fr.image, dir + "/" + buf, comment);
      }
    });
  } else {
    throw ConfigError("unknown camera set " + cameras + " (expected input or eval)");
  }
}

void Pipeline::run_eval() {
  write_config();
  const std::string scene_path = require_artifact("scene.json", "eval", "gen");
  const std::string checkpoint_path = require_artifact("checkpoint.json", "eval", "optimize");
  const std::string scene_stamp = artifact_stamp(scene_path);
  const std::string checkpoint_stamp = artifact_stamp(checkpoint_path);
  if (!options_.force && scene_stamp != checkpoint_stamp)
    throw ConfigError("mixed config stamps: scene.json carries " + scene_stamp +
                      " but checkpoint.json carries " + checkpoint_stamp +
                      "; rerun the stale stages or force the evaluation");

  const SyntheticScene scene = load_scene(scene_path);
  const Model model = load_model(checkpoint_path);
  std::vector<PckThreshold> thresholds;
  for (double f : config_.eval.pck_fractions) {
    PckThreshold t;
    t.fraction_of_diagonal = true;
    t.value = f;
    thresholds.push_back(t);
  }
  for (double a : config_.eval.pck_absolute) {
    PckThreshold t;
    t.fraction_of_diagonal = false;
    t.value = a;
    thresholds.push_back(t);
  }
  const MetricReport report =
      eval_checkpoint(model, scene, config_.render, thresholds, options_.threads);
  write_text(path("metrics.csv"), metric_report_csv(report, hash_));
  write_text(path("metrics.json"), metric_report_json(report, hash_));
}

}  // namespace usplat
