#pragma once

#include "usplat/graph.hpp"
#include "usplat/render.hpp"
#include "usplat/scene.hpp"
#include "usplat/uncertainty.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace usplat {

struct LossWeights {
  double lambda_iso = 1.0;
  double lambda_rigid = 1.0;
  double lambda_rot = 0.01;
  double lambda_vel = 0.01;
  double lambda_acc = 0.01;
  int delta = 1;  // frame interval of the rigidity and rotation terms
  double lambda_rgb_l1 = 0.8;
  double lambda_rgb_ssim = 0.2;
  // Smoothing inside the uncertainty-weighted norms only; the plain locality
  // norms stay exact so rigid motion scores an exact zero.
  double norm_eps = 1e-12;
  bool nonkey_sum_all_nodes = false;  // anchor sum over every node instead of non-keys
};

// Weighted per-term values in insertion order; total is their plain sum.
struct LossReport {
  std::vector<std::pair<std::string, double>> terms;
  double total = 0.0;

  void add(const std::string& name, double value);
  double value(const std::string& name) const;
  bool has(const std::string& name) const;
};

std::string loss_report_csv_header(const LossReport& report);
std::string loss_report_csv_row(int iteration, const LossReport& report);

// Gradient of a scalar objective with respect to every model parameter.
// Rotation gradients are with respect to the raw stored quaternions; the
// normalization applied wherever a rotation is used is part of the chain.
struct ModelGrad {
  std::vector<std::vector<Vec3>> d_position;
  std::vector<std::vector<Vec4>> d_rotation;
  std::vector<Vec3> d_color;
  std::vector<double> d_opacity;

  ModelGrad() = default;
  explicit ModelGrad(const Model& model);
  void set_zero();
  // Name of the first non-finite entry, or the empty string.
  std::string first_non_finite() const;
};

// Node set with per-node neighbor lists for the locality terms.  Targets are
// model indices; k is the nominal neighbor count in the 1/(k |V|) normalizer.
struct NeighborSet {
  std::vector<int> nodes;
  std::vector<std::vector<GraphEdge>> edges;
  int k = 1;
};

NeighborSet key_neighbor_set(const MotionGraph& graph);
NeighborSet nonkey_neighbor_set(const MotionGraph& graph);
// Plain Euclidean kNN at the canonical frame over all Gaussians with the same
// kernel weighting as graph edges.  The baseline objective runs on this.
NeighborSet euclidean_neighbor_set(const Model& model, int canonical, int k);

// Every loss below returns its raw value and, when grad is given, accumulates
// scale * d(raw)/d(parameters).  Kinks (absolute values, norms at zero) use
// the zero subgradient.

double iso_loss(const Model& model, const NeighborSet& nbrs, int canonical, double scale,
                ModelGrad* grad);
double rigid_loss(const Model& model, const NeighborSet& nbrs, int delta, double scale,
                  ModelGrad* grad);
double rot_loss(const Model& model, const NeighborSet& nbrs, int delta, double scale,
                ModelGrad* grad);
double vel_loss(const Model& model, std::span<const int> nodes, double scale,
                ModelGrad* grad);
double acc_loss(const Model& model, std::span<const int> nodes, double scale,
                ModelGrad* grad);

// Lambda-weighted sum of the five locality terms.  When a report is given,
// each weighted term is recorded under prefix + name.
double motion_loss(const Model& model, const NeighborSet& nbrs, int canonical,
                   const LossWeights& weights, double scale, ModelGrad* grad,
                   LossReport* report = nullptr, const std::string& prefix = "");

// Uncertainty-weighted distance to the reference trajectory over the node set
// and every frame.  High uncertainty weakens the pull.
double anchor_loss(const Model& model, const Model& reference, const UncertaintyField& field,
                   const std::vector<Camera>& cameras, std::span<const int> nodes,
                   double norm_eps, double scale, ModelGrad* grad);

// Uncertainty-weighted distance between each non-key node and its pose
// interpolated from the key anchors.  Gradients reach the key nodes through
// the blend, including their canonical states.
double dqb_consistency_loss(const Model& model, const UncertaintyField& field,
                            const std::vector<Camera>& cameras, const MotionGraph& graph,
                            int canonical, double norm_eps, double scale, ModelGrad* grad);

double key_loss(const Model& model, const Model& reference, const UncertaintyField& field,
                const std::vector<Camera>& cameras, const MotionGraph& graph, int canonical,
                const LossWeights& weights, ModelGrad* grad, LossReport* report = nullptr);
double nonkey_loss(const Model& model, const Model& reference, const UncertaintyField& field,
                   const std::vector<Camera>& cameras, const MotionGraph& graph,
                   int canonical, const LossWeights& weights, ModelGrad* grad,
                   LossReport* report = nullptr);

// l1 + SSIM mix.  The optional gradient is with respect to the rendered
// pixels.  Bit-identical images short-circuit to an exact zero.
double perception_loss(const Image& rendered, const Image& truth, const LossWeights& weights,
                       Image* grad_rendered = nullptr);

// Pushes pixel gradients through the recorded blend weights into color and
// opacity.  Weights and transmittance are treated as constants of the
// iteration, so geometry receives no photometric gradient.
void accumulate_photometric(const FrameRender& frame, const Model& model,
                            const Image& pixel_grad, double scale, ModelGrad* grad);

struct BatchFrame {
  int frame = 0;
  const FrameRender* render = nullptr;
  const Image* truth = nullptr;
};

// Full objective: mean perception over the batch plus the key and non-key
// losses over all frames.  Perception runs per frame in parallel; the
// reduction order is fixed, so the thread count never changes the result.
LossReport total_loss(const Model& model, const Model& reference,
                      const UncertaintyField& field, const std::vector<Camera>& cameras,
                      const MotionGraph& graph, int canonical, const LossWeights& weights,
                      std::span<const BatchFrame> batch, ModelGrad* grad, int threads = 1);

// Baseline objective: mean perception plus the locality terms over every
// node, with no uncertainty weighting and no graph.
LossReport vanilla_total_loss(const Model& model, const NeighborSet& nbrs, int canonical,
                              const LossWeights& weights, std::span<const BatchFrame> batch,
                              ModelGrad* grad, int threads = 1);

}  // namespace usplat
