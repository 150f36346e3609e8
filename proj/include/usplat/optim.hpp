#pragma once

#include "usplat/losses.hpp"
#include "usplat/render.hpp"
#include "usplat/scene.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace usplat {

struct AdamConfig {
  double lr_position = 1.6e-3;
  double lr_rotation = 1e-3;
  double lr_color = 2.5e-2;
  double lr_opacity = 5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ScheduleConfig {
  int iterations = 1600;
  int batch_size = 8;
  // Opening and closing phases update geometry only; appearance joins in the
  // middle stretch.
  double head_fraction = 0.10;
  double tail_fraction = 0.20;
};

// Moment accumulators mirror the gradient layout.  Each group keeps its own
// step counter so a phase that skips a group leaves its bias correction, and
// the group itself, untouched.
struct OptimizerState {
  ModelGrad m;
  ModelGrad v;
  int64_t geometry_steps = 0;
  int64_t appearance_steps = 0;

  OptimizerState() = default;
  explicit OptimizerState(const Model& model) : m(model), v(model) {}
};

// One adaptive-moment update over the selected groups.  Rotations are
// renormalized to unit length afterwards; colors and opacities are clamped to
// their valid ranges.
void adam_step(OptimizerState* state, Model* model, const ModelGrad& grad,
               const AdamConfig& config, bool update_geometry, bool update_appearance);

enum class SnapshotSource { kVanilla, kDrift };

std::string snapshot_source_name(SnapshotSource s);
SnapshotSource snapshot_source_from_name(const std::string& name);

// Trajectories frozen at the end of pretraining; the anchors of the
// uncertainty-aware losses point here.
struct PretrainedSnapshot {
  Model model;
  SnapshotSource source = SnapshotSource::kVanilla;
};

struct DriftConfig {
  double walk_sigma = 0.01;    // per-frame random walk inside occlusion intervals
  double global_noise = 1e-3;  // perturbation applied everywhere
  // Camera-frame anisotropy of the walk (z = depth).  Ones keep it isotropic.
  Vec3 axis_weights = Vec3(1.0, 1.0, 1.0);
};

struct PretrainConfig {
  SnapshotSource mode = SnapshotSource::kVanilla;
  int iterations = 200;
  int batch_size = 8;
  double init_noise = 1e-3;  // position noise against ground truth
  int k = 8;                 // Euclidean neighbor count for the locality terms
  DriftConfig drift;
};

struct OptimizeResult {
  Model model;
  std::vector<LossReport> history;
  OptimizerState state;
};

// Ground truth perturbed per frame by init_noise, then optimized with the
// baseline objective (perception + locality over all nodes).
OptimizeResult pretrain_vanilla(const SyntheticScene& scene,
                                const std::vector<Image>& truth_images,
                                const PretrainConfig& config, const LossWeights& weights,
                                const AdamConfig& adam, const RenderOptions& ropts,
                                uint64_t seed, int threads);

// Controlled stand-in for an upstream tracker that loses occluded content: a
// per-frame random walk accumulates inside occlusion intervals and resets to
// ground truth plus global noise wherever the input view sees the Gaussian.
// After n occluded frames the walk's per-axis deviation has standard
// deviation walk_sigma * sqrt(n).
Model simulate_pretrained_drift(const SyntheticScene& scene, const DriftConfig& config,
                                uint64_t seed);

enum class OptimizeMode { kUncertaintyAware, kVanilla };

std::string optimize_mode_name(OptimizeMode m);
OptimizeMode optimize_mode_from_name(const std::string& name);

struct OptimizeConfig {
  ScheduleConfig schedule;
  AdamConfig adam;
  OptimizeMode mode = OptimizeMode::kUncertaintyAware;
  int vanilla_k = 8;  // neighbor count of the baseline locality terms
};

// The main loop: per iteration, render a sampled batch of input frames under
// the occlusion masks, evaluate the objective, and step.  field and graph are
// required in uncertainty-aware mode and ignored otherwise.  Deterministic
// for a fixed seed at any thread count.
OptimizeResult optimize_model(Model model, const Model& reference,
                              const UncertaintyField* field, const MotionGraph* graph,
                              const SyntheticScene& scene,
                              const std::vector<Image>& truth_images,
                              const OptimizeConfig& config, const LossWeights& weights,
                              const RenderOptions& ropts, uint64_t seed, int threads);

// Central differences of a scalar function, one coordinate at a time.
std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                const std::vector<double>& params, double step);

std::string serialize_optimizer_state(const OptimizerState& state,
                                      const std::string& config_hash);

}  // namespace usplat
