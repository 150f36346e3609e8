#include "usplat/optim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace usplat {

using nlohmann::json;

namespace {

void update_scalar(double* p, double* m, double* v, double g, double lr,
                   const AdamConfig& cfg, double bc1, double bc2) {
  *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
  *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
  *p -= lr * (*m / bc1) / (std::sqrt(*v / bc2) + cfg.eps);
}

}  // namespace

void adam_step(OptimizerState* state, Model* model, const ModelGrad& grad,
               const AdamConfig& config, bool update_geometry, bool update_appearance) {
  const int frames = model_frames(*model);
  const size_t n = model->size();
  if (grad.d_position.size() != n || state->m.d_position.size() != n)
    throw ShapeError("gradient or moment shapes do not match the model");

  if (update_geometry) {
    ++state->geometry_steps;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state->geometry_steps));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state->geometry_steps));
    for (size_t i = 0; i < n; ++i) {
      auto& traj = (*model)[i];
      for (int t = 0; t < frames; ++t) {
        for (int c = 0; c < 3; ++c)
          update_scalar(&traj.positions[t][c], &state->m.d_position[i][t][c],
                        &state->v.d_position[i][t][c], grad.d_position[i][t][c],
                        config.lr_position, config, bc1, bc2);
        for (int c = 0; c < 4; ++c)
          update_scalar(&traj.rotations[t][c], &state->m.d_rotation[i][t][c],
                        &state->v.d_rotation[i][t][c], grad.d_rotation[i][t][c],
                        config.lr_rotation, config, bc1, bc2);
        const double norm = traj.rotations[t].norm();
        if (norm < 1e-12)
          throw NumericError("rotation collapsed to zero during an update");
        traj.rotations[t] /= norm;
      }
    }
  }

  if (update_appearance) {
    ++state->appearance_steps;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state->appearance_steps));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state->appearance_steps));
    for (size_t i = 0; i < n; ++i) {
      auto& traj = (*model)[i];
      for (int c = 0; c < 3; ++c) {
        update_scalar(&traj.color[c], &state->m.d_color[i][c], &state->v.d_color[i][c],
                      grad.d_color[i][c], config.lr_color, config, bc1, bc2);
        traj.color[c] = std::clamp(traj.color[c], 0.0, 1.0);
      }
      update_scalar(&traj.opacity, &state->m.d_opacity[i], &state->v.d_opacity[i],
                    grad.d_opacity[i], config.lr_opacity, config, bc1, bc2);
      // Ceiling below the blend clamp so opacity gradients stay exact; floor
      // keeps the opacity division defined.
      traj.opacity = std::clamp(traj.opacity, 1e-3, 0.995);
    }
  }
}

std::string snapshot_source_name(SnapshotSource s) {
  return s == SnapshotSource::kVanilla ? "vanilla" : "drift";
}

SnapshotSource snapshot_source_from_name(const std::string& name) {
  if (name == "vanilla") return SnapshotSource::kVanilla;
  if (name == "drift") return SnapshotSource::kDrift;
  throw ConfigError("unknown pretrain mode: " + name);
}

std::string optimize_mode_name(OptimizeMode m) {
  return m == OptimizeMode::kUncertaintyAware ? "uncertainty" : "vanilla";
}

OptimizeMode optimize_mode_from_name(const std::string& name) {
  if (name == "uncertainty") return OptimizeMode::kUncertaintyAware;
  if (name == "vanilla") return OptimizeMode::kVanilla;
  throw ConfigError("unknown optimize mode: " + name);
}

namespace {

std::vector<int> sample_frames(Rng* rng, int frames, int batch) {
  if (batch >= frames) {
    std::vector<int> all(frames);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  std::vector<int> idx(frames);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < batch; ++i) std::swap(idx[i], idx[rng->uniform_int(i, frames - 1)]);
  idx.resize(batch);
  std::sort(idx.begin(), idx.end());
  return idx;
}

using Objective =
    std::function<LossReport(const Model&, std::span<const BatchFrame>, ModelGrad*)>;

// Shared iteration machinery: sample, render under the input-view occlusion
// masks, evaluate, step.  head/tail are iteration counts that restrict the
// update to geometry.
OptimizeResult run_loop(Model model, const SyntheticScene& scene,
                        const std::vector<Image>& truth_images, const AdamConfig& adam,
                        int iterations, int batch_size, int head, int tail,
                        const RenderOptions& ropts, uint64_t seed, int threads,
                        const Objective& objective) {
  const int frames = model_frames(model);
  if (scene.frame_count != frames || static_cast<int>(truth_images.size()) != frames)
    throw ShapeError("scene or reference images do not match the model");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");

  OptimizerState state(model);
  ModelGrad grad(model);
  Rng rng(seed);
  OptimizeResult result;
  result.history.reserve(iterations);

  for (int it = 0; it < iterations; ++it) {
    const bool appearance = it >= head && it < iterations - tail;
    const auto picks = sample_frames(&rng, frames, batch_size);
    const int b = static_cast<int>(picks.size());
    std::vector<FrameRender> renders(b);
    parallel_for(b, threads, [&](int begin, int end) {
      for (int f = begin; f < end; ++f) {
        const int t = picks[f];
        const auto states = states_at(model, t);
        const auto mask = scene.visibility_mask(t);
        renders[f] = render_frame(states, scene.input_cameras[t], ropts, &mask);
      }
    });
    std::vector<BatchFrame> batch(b);
    for (int f = 0; f < b; ++f) batch[f] = {picks[f], &renders[f], &truth_images[picks[f]]};

    grad.set_zero();
    LossReport report = objective(model, batch, &grad);
    for (const auto& [name, value] : report.terms)
      if (!std::isfinite(value))
        throw NumericError("loss term " + name + " became non-finite at iteration " +
                           std::to_string(it));
    const std::string bad = grad.first_non_finite();
    if (!bad.empty())
      throw NumericError("non-finite gradient in " + bad + " at iteration " +
                         std::to_string(it));

    adam_step(&state, &model, grad, adam, true, appearance);
    result.history.push_back(std::move(report));
  }
  result.model = std::move(model);
  result.state = std::move(state);
  return result;
}

}  // namespace

OptimizeResult pretrain_vanilla(const SyntheticScene& scene,
                                const std::vector<Image>& truth_images,
                                const PretrainConfig& config, const LossWeights& weights,
                                const AdamConfig& adam, const RenderOptions& ropts,
                                uint64_t seed, int threads) {
  Rng rng(seed);
  Model model = scene.truth;
  for (auto& traj : model)
    for (auto& p : traj.positions) p += config.init_noise * rng.normal3();
  if (config.iterations == 0) {
    OptimizeResult result;
    result.model = std::move(model);
    return result;
  }
  const NeighborSet nbrs = euclidean_neighbor_set(model, 0, config.k);
  const Objective objective = [&](const Model& m, std::span<const BatchFrame> batch,
                                  ModelGrad* g) {
    return vanilla_total_loss(m, nbrs, 0, weights, batch, g, threads);
  };
  return run_loop(std::move(model), scene, truth_images, adam, config.iterations,
                  config.batch_size, 0, 0, ropts, rng.raw(), threads, objective);
}

Model simulate_pretrained_drift(const SyntheticScene& scene, const DriftConfig& config,
                                uint64_t seed) {
  Rng rng(seed);
  Model model = scene.truth;
  for (size_t i = 0; i < model.size(); ++i) {
    Vec3 offset = Vec3::Zero();
    for (int t = 0; t < scene.frame_count; ++t) {
      if (scene.visible_at(static_cast<int>(i), t)) {
        offset = config.global_noise * rng.normal3();
      } else {
        offset += config.walk_sigma * (scene.input_cameras[t].R_wc *
                                       config.axis_weights.cwiseProduct(rng.normal3()));
      }
      model[i].positions[t] += offset;
    }
  }
  return model;
}

OptimizeResult optimize_model(Model model, const Model& reference,
                              const UncertaintyField* field, const MotionGraph* graph,
                              const SyntheticScene& scene,
                              const std::vector<Image>& truth_images,
                              const OptimizeConfig& config, const LossWeights& weights,
                              const RenderOptions& ropts, uint64_t seed, int threads) {
  const int canonical = 0;
  const int head = static_cast<int>(
      std::llround(config.schedule.head_fraction * config.schedule.iterations));
  const int tail = static_cast<int>(
      std::llround(config.schedule.tail_fraction * config.schedule.iterations));

  Objective objective;
  NeighborSet vanilla_nbrs;
  if (config.mode == OptimizeMode::kUncertaintyAware) {
    if (!field || !graph)
      throw ConfigError(
          "uncertainty-aware optimization requires an uncertainty field and a motion graph");
    objective = [&, field, graph](const Model& m, std::span<const BatchFrame> batch,
                                  ModelGrad* g) {
      return total_loss(m, reference, *field, scene.input_cameras, *graph, canonical,
                        weights, batch, g, threads);
    };
  } else {
    vanilla_nbrs = euclidean_neighbor_set(model, canonical, config.vanilla_k);
    objective = [&](const Model& m, std::span<const BatchFrame> batch, ModelGrad* g) {
      return vanilla_total_loss(m, vanilla_nbrs, canonical, weights, batch, g, threads);
    };
  }
  return run_loop(std::move(model), scene, truth_images, config.adam,
                  config.schedule.iterations, config.schedule.batch_size, head, tail, ropts,
                  seed, threads, objective);
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                const std::vector<double>& params, double step) {
  std::vector<double> grad(params.size());
  std::vector<double> p = params;
  for (size_t i = 0; i < params.size(); ++i) {
    p[i] = params[i] + step;
    const double hi = fn(p);
    p[i] = params[i] - step;
    const double lo = fn(p);
    p[i] = params[i];
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

namespace {

json grad_to_json(const ModelGrad& g) {
  json j;
  json pos = json::array(), rot = json::array();
  for (size_t i = 0; i < g.d_position.size(); ++i) {
    json pi = json::array(), ri = json::array();
    for (size_t t = 0; t < g.d_position[i].size(); ++t) {
      const Vec3& p = g.d_position[i][t];
      pi.push_back({p[0], p[1], p[2]});
      const Vec4& r = g.d_rotation[i][t];
      ri.push_back({r[0], r[1], r[2], r[3]});
    }
    pos.push_back(std::move(pi));
    rot.push_back(std::move(ri));
  }
  j["position"] = std::move(pos);
  j["rotation"] = std::move(rot);
  json col = json::array();
  for (const Vec3& c : g.d_color) col.push_back({c[0], c[1], c[2]});
  j["color"] = std::move(col);
  j["opacity"] = g.d_opacity;
  return j;
}

}  // namespace

std::string serialize_optimizer_state(const OptimizerState& state,
                                      const std::string& config_hash) {
  json j;
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["geometry_steps"] = state.geometry_steps;
  j["appearance_steps"] = state.appearance_steps;
  j["first_moment"] = grad_to_json(state.m);
  j["second_moment"] = grad_to_json(state.v);
  return j.dump();
}

}  // namespace usplat
