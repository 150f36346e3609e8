#pragma once

#include "usplat/scene.hpp"
#include "usplat/uncertainty.hpp"

#include <string>
#include <vector>

namespace usplat {

struct GraphParams {
  double key_fraction = 0.02;   // confidence quantile that sets eta_u
  double voxel_divisor = 32.0;  // voxel edge = bbox diagonal / divisor
  int min_period = 5;           // frames below eta_u required of a key
  int k = 8;                    // neighbors per key node
  bool inverse_metric = false;  // use (U_i + U_j)^-1 instead of U_i + U_j
  bool longest_run_period = false;  // consecutive- instead of total-frame period
};

struct GraphEdge {
  int target = 0;
  double weight = 0.0;
};

struct MotionGraph {
  std::vector<int> key_nodes;      // ascending
  std::vector<int> non_key_nodes;  // ascending
  std::vector<std::vector<GraphEdge>> key_edges;       // aligned with key_nodes
  std::vector<int> t_hat;                              // aligned with key_nodes
  std::vector<int> anchor;                             // aligned with non_key_nodes
  std::vector<std::vector<GraphEdge>> inherited_edges; // aligned with non_key_nodes
  std::vector<int> t_ref;                              // aligned with non_key_nodes
  double eta_u = 0.0;
  GraphParams params;

  int key_index(int node) const;      // -1 when not a key
  int non_key_index(int node) const;  // -1 when not a non-key
};

// sqrt((x-y)^T M (x-y)).  A negative quadratic form marks M as non-SPD.
double mahalanobis_distance(const Vec3& x, const Vec3& y, const Mat3& m);

// Uncertainty value at the configured confidence quantile.  Each Gaussian is
// ranked by the u-value at which it first accumulates min_period sub-threshold
// frames (its min_period-th smallest finite entry), so the fraction budgets
// exactly the nodes that can pass the period filter downstream.
double uncertainty_threshold(const UncertaintyField& field, double key_fraction,
                             int min_period = 1);

// Frames a Gaussian spends below eta_u, either in total or as the longest
// consecutive run.
int significant_period(const UncertaintyField& field, int gaussian, double eta_u,
                       bool longest_run);

// One low-uncertainty winner per occupied voxel per frame, unioned over
// frames.  Ties break toward the lower index.
std::vector<int> select_key_candidates(const Model& model, const UncertaintyField& field,
                                       double eta_u, double voxel_size);

// Candidates surviving the period filter, with their most-confident frames.
// Throws when nothing survives.
void finalize_key_set(const std::vector<int>& candidates, const UncertaintyField& field,
                      double eta_u, const GraphParams& params, std::vector<int>* key_nodes,
                      std::vector<int>* t_hat);

// Normalized Gaussian-kernel weights over Euclidean distances at a reference
// frame; the bandwidth is the median distance within the set.
std::vector<double> edge_weights(const Model& model, int node, const std::vector<int>& others,
                                 int ref_frame);

MotionGraph build_motion_graph(const Model& model, const UncertaintyField& field,
                               const std::vector<Camera>& input_cameras,
                               const GraphParams& params);

std::string serialize_graph(const MotionGraph& graph, const std::string& config_hash);
MotionGraph deserialize_graph(const std::string& text);
void save_graph(const MotionGraph& graph, const std::string& path,
                const std::string& config_hash);
MotionGraph load_graph(const std::string& path);

}  // namespace usplat
