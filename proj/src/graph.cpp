#include "usplat/graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace usplat {

using nlohmann::json;

int MotionGraph::key_index(int node) const {
  const auto it = std::lower_bound(key_nodes.begin(), key_nodes.end(), node);
  if (it == key_nodes.end() || *it != node) return -1;
  return static_cast<int>(it - key_nodes.begin());
}

int MotionGraph::non_key_index(int node) const {
  const auto it = std::lower_bound(non_key_nodes.begin(), non_key_nodes.end(), node);
  if (it == non_key_nodes.end() || *it != node) return -1;
  return static_cast<int>(it - non_key_nodes.begin());
}

double mahalanobis_distance(const Vec3& x, const Vec3& y, const Mat3& m) {
  const Vec3 d = x - y;
  const double q = d.dot(m * d);
  if (q < 0.0) throw NumericError("mahalanobis_distance: metric is not positive definite");
  return std::sqrt(q);
}

double uncertainty_threshold(const UncertaintyField& field, double key_fraction,
                             int min_period) {
  if (key_fraction <= 0.0 || key_fraction >= 1.0)
    throw ConfigError("key_fraction must lie in (0, 1)");
  if (min_period < 1) throw ConfigError("min_period must be at least 1");
  // The fraction budgets key nodes, not entries.  Ranking each Gaussian by
  // its min_period-th smallest finite value makes the budget count exactly
  // the nodes that can pass the period filter: u <= rank value < threshold
  // holds on at least min_period frames for everything under the quantile.
  std::vector<double> rank, scratch;
  rank.reserve(field.gaussian_count);
  for (int i = 0; i < field.gaussian_count; ++i) {
    scratch.clear();
    for (int t = 0; t < field.frame_count; ++t) {
      const double v = field.scalar(i, t);
      if (v < field.params.phi) scratch.push_back(v);
    }
    if (scratch.size() < static_cast<size_t>(min_period)) continue;
    std::nth_element(scratch.begin(), scratch.begin() + (min_period - 1), scratch.end());
    rank.push_back(scratch[min_period - 1]);
  }
  if (rank.empty())
    throw ConfigError(
        "no Gaussian ever converged; the confidence quantile is undefined "
        "(check the snapshot or raise eta_c)");
  std::sort(rank.begin(), rank.end());
  size_t idx = static_cast<size_t>(std::llround(key_fraction * rank.size()));
  idx = std::min(idx, rank.size() - 1);
  return rank[idx];
}

int significant_period(const UncertaintyField& field, int gaussian, double eta_u,
                       bool longest_run) {
  int total = 0, run = 0, best_run = 0;
  for (int t = 0; t < field.frame_count; ++t) {
    if (field.scalar(gaussian, t) < eta_u) {
      ++total;
      ++run;
      best_run = std::max(best_run, run);
    } else {
      run = 0;
    }
  }
  return longest_run ? best_run : total;
}

namespace {

struct VoxelBest {
  double u;
  int index;
};

uint64_t voxel_key(const Vec3& p, const Vec3& origin, double size) {
  const auto q = [&](int axis) {
    return static_cast<uint64_t>(
        static_cast<int64_t>(std::floor((p[axis] - origin[axis]) / size)) + (1 << 20));
  };
  return (q(0) << 42) | (q(1) << 21) | q(2);
}

}  // namespace

std::vector<int> select_key_candidates(const Model& model, const UncertaintyField& field,
                                       double eta_u, double voxel_size) {
  if (voxel_size <= 0.0) throw ConfigError("voxel size must be positive");
  const int frames = model_frames(model);
  const int n = static_cast<int>(model.size());
  Vec3 lo, hi;
  model_bounds(model, &lo, &hi);

  std::vector<uint8_t> chosen(n, 0);
  std::unordered_map<uint64_t, VoxelBest> best;
  for (int t = 0; t < frames; ++t) {
    best.clear();
    for (int i = 0; i < n; ++i) {
      const double u = field.scalar(i, t);
      if (u >= eta_u) continue;
      const uint64_t key = voxel_key(model[i].positions[t], lo, voxel_size);
      auto [it, inserted] = best.try_emplace(key, VoxelBest{u, i});
      if (!inserted && (u < it->second.u || (u == it->second.u && i < it->second.index)))
        it->second = VoxelBest{u, i};
    }
    for (const auto& [key, vb] : best) chosen[vb.index] = 1;
  }

  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (chosen[i]) out.push_back(i);
  return out;
}

void finalize_key_set(const std::vector<int>& candidates, const UncertaintyField& field,
                      double eta_u, const GraphParams& params, std::vector<int>* key_nodes,
                      std::vector<int>* t_hat) {
  key_nodes->clear();
  t_hat->clear();
  for (int i : candidates) {
    if (significant_period(field, i, eta_u, params.longest_run_period) < params.min_period)
      continue;
    key_nodes->push_back(i);
    int best_t = 0;
    double best_u = field.scalar(i, 0);
    for (int t = 1; t < field.frame_count; ++t) {
      const double u = field.scalar(i, t);
      if (u < best_u) {
        best_u = u;
        best_t = t;
      }
    }
    t_hat->push_back(best_t);
  }
  if (key_nodes->empty())
    throw ConfigError(
        "no key candidate has a significant period of " +
        std::to_string(params.min_period) +
        " frames; enlarge the voxels (lower graph.voxel_divisor) or raise "
        "graph.key_fraction");
}

std::vector<double> edge_weights(const Model& model, int node, const std::vector<int>& others,
                                 int ref_frame) {
  if (others.empty()) throw ShapeError("edge_weights over an empty neighbor set");
  const Vec3 p = model[node].positions[ref_frame];
  std::vector<double> dist(others.size());
  for (size_t j = 0; j < others.size(); ++j)
    dist[j] = (model[others[j]].positions[ref_frame] - p).norm();

  std::vector<double> sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  std::vector<double> w(others.size());
  double sum = 0.0;
  if (median <= 1e-12) {
    // Degenerate bandwidth: the kernel limit puts all mass on the closest
    // neighbors.
    const double dmin = sorted.front();
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] = dist[j] <= dmin + 1e-12 ? 1.0 : 0.0;
      sum += w[j];
    }
  } else {
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] = std::exp(-dist[j] * dist[j] / (2.0 * median * median));
      sum += w[j];
    }
  }
  for (double& v : w) v /= sum;
  return w;
}

namespace {

// Quadratic form of the pairwise metric without building the 3x3 matrix: the
// camera rotation diagonalizes U_i + U_j.
double pair_distance(const Vec3& pi, const Vec3& pj, double ui, double uj,
                     const Camera& cam, const Vec3& r, bool inverse_metric) {
  const Vec3 d_cam = cam.R_wc.transpose() * (pi - pj);
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double scale = r[a] * (ui + uj);
    q += inverse_metric ? d_cam[a] * d_cam[a] / scale : d_cam[a] * d_cam[a] * scale;
  }
  return std::sqrt(q);
}

}  // namespace

MotionGraph build_motion_graph(const Model& model, const UncertaintyField& field,
                               const std::vector<Camera>& input_cameras,
                               const GraphParams& params) {
  const int frames = model_frames(model);
  const int n = static_cast<int>(model.size());
  if (field.gaussian_count != n || field.frame_count != frames)
    throw ShapeError("uncertainty field does not match the model");
  if (static_cast<int>(input_cameras.size()) != frames)
    throw ShapeError("camera count does not match the model");
  if (params.k < 1) throw ConfigError("graph.k must be at least 1");

  MotionGraph graph;
  graph.params = params;
  graph.eta_u = uncertainty_threshold(field, params.key_fraction, params.min_period);

  Vec3 lo, hi;
  model_bounds(model, &lo, &hi);
  const double diag = (hi - lo).norm();
  const double voxel = std::max(diag, 1e-9) / params.voxel_divisor;

  const auto candidates = select_key_candidates(model, field, graph.eta_u, voxel);
  finalize_key_set(candidates, field, graph.eta_u, params, &graph.key_nodes, &graph.t_hat);

  const int nk = static_cast<int>(graph.key_nodes.size());
  if (nk <= params.k)
    throw ConfigError("key set of size " + std::to_string(nk) +
                      " cannot supply k=" + std::to_string(params.k) +
                      " neighbors; reduce graph.k or raise graph.key_fraction");

  const Vec3& r = field.params.r;
  graph.key_edges.resize(nk);
  for (int ki = 0; ki < nk; ++ki) {
    const int i = graph.key_nodes[ki];
    const int th = graph.t_hat[ki];
    const Camera& cam = input_cameras[th];
    const double ui = field.scalar(i, th);
    std::vector<std::pair<double, int>> dist;
    dist.reserve(nk - 1);
    for (int kj = 0; kj < nk; ++kj) {
      if (kj == ki) continue;
      const int j = graph.key_nodes[kj];
      dist.emplace_back(pair_distance(model[i].positions[th], model[j].positions[th], ui,
                                      field.scalar(j, th), cam, r, params.inverse_metric),
                        j);
    }
    std::partial_sort(dist.begin(), dist.begin() + params.k, dist.end());
    std::vector<int> neighbors(params.k);
    for (int e = 0; e < params.k; ++e) neighbors[e] = dist[e].second;
    const auto w = edge_weights(model, i, neighbors, th);
    graph.key_edges[ki].resize(params.k);
    for (int e = 0; e < params.k; ++e) graph.key_edges[ki][e] = {neighbors[e], w[e]};
  }

  for (int i = 0; i < n; ++i)
    if (graph.key_index(i) < 0) graph.non_key_nodes.push_back(i);

  graph.anchor.reserve(graph.non_key_nodes.size());
  graph.inherited_edges.reserve(graph.non_key_nodes.size());
  graph.t_ref.reserve(graph.non_key_nodes.size());
  for (int i : graph.non_key_nodes) {
    int best_key = -1;
    double best_sum = 0.0;
    for (int ki = 0; ki < nk; ++ki) {
      const int l = graph.key_nodes[ki];
      double sum = 0.0;
      for (int t = 0; t < frames; ++t)
        sum += pair_distance(model[i].positions[t], model[l].positions[t],
                             field.scalar(i, t), field.scalar(l, t), input_cameras[t], r,
                             params.inverse_metric);
      if (best_key < 0 || sum < best_sum) {
        best_key = l;
        best_sum = sum;
      }
    }
    graph.anchor.push_back(best_key);

    // Reference frame: where the node sits closest to its anchor under the
    // same metric that chose it.
    int ref = 0;
    double best_d = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double d = pair_distance(model[i].positions[t], model[best_key].positions[t],
                                     field.scalar(i, t), field.scalar(best_key, t),
                                     input_cameras[t], r, params.inverse_metric);
      if (t == 0 || d < best_d) {
        best_d = d;
        ref = t;
      }
    }
    graph.t_ref.push_back(ref);

    // Inherited set: the anchor first (it seeds the blend hemisphere), then
    // the anchor's own neighbors.
    std::vector<int> set_nodes = {best_key};
    for (const auto& e : graph.key_edges[graph.key_index(best_key)])
      set_nodes.push_back(e.target);
    const auto w = edge_weights(model, i, set_nodes, ref);
    std::vector<GraphEdge> edges(set_nodes.size());
    for (size_t e = 0; e < set_nodes.size(); ++e) edges[e] = {set_nodes[e], w[e]};
    graph.inherited_edges.push_back(std::move(edges));
  }
  return graph;
}

std::string serialize_graph(const MotionGraph& graph, const std::string& config_hash) {
  json j;
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["key"] = graph.key_nodes;
  j["eta_u"] = graph.eta_u;
  json edges = json::object();
  for (size_t ki = 0; ki < graph.key_nodes.size(); ++ki) {
    json list = json::array();
    for (const auto& e : graph.key_edges[ki]) list.push_back({e.target, e.weight});
    edges[std::to_string(graph.key_nodes[ki])] = std::move(list);
  }
  json anchors = json::object();
  json t_ref = json::object();
  for (size_t m = 0; m < graph.non_key_nodes.size(); ++m) {
    const std::string key = std::to_string(graph.non_key_nodes[m]);
    json list = json::array();
    for (const auto& e : graph.inherited_edges[m]) list.push_back({e.target, e.weight});
    edges[key] = std::move(list);
    anchors[key] = graph.anchor[m];
    t_ref[key] = graph.t_ref[m];
  }
  j["edges"] = std::move(edges);
  j["anchors"] = std::move(anchors);
  json t_hat = json::object();
  for (size_t ki = 0; ki < graph.key_nodes.size(); ++ki)
    t_hat[std::to_string(graph.key_nodes[ki])] = graph.t_hat[ki];
  j["t_hat"] = std::move(t_hat);
  j["t_ref"] = std::move(t_ref);
  j["params"] = {{"key_fraction", graph.params.key_fraction},
                 {"voxel_divisor", graph.params.voxel_divisor},
                 {"min_period", graph.params.min_period},
                 {"k", graph.params.k},
                 {"inverse_metric", graph.params.inverse_metric},
                 {"longest_run_period", graph.params.longest_run_period}};
  return j.dump();
}

MotionGraph deserialize_graph(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("graph parse error: ") + e.what());
  }
  MotionGraph graph;
  graph.key_nodes = j.at("key").get<std::vector<int>>();
  graph.eta_u = j.at("eta_u").get<double>();
  const json& params = j.at("params");
  graph.params.key_fraction = params.at("key_fraction").get<double>();
  graph.params.voxel_divisor = params.at("voxel_divisor").get<double>();
  graph.params.min_period = params.at("min_period").get<int>();
  graph.params.k = params.at("k").get<int>();
  graph.params.inverse_metric = params.at("inverse_metric").get<bool>();
  graph.params.longest_run_period = params.at("longest_run_period").get<bool>();

  auto edge_list = [](const json& list) {
    std::vector<GraphEdge> out;
    for (const auto& e : list) out.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
    return out;
  };
  const json& edges = j.at("edges");
  const json& t_hat = j.at("t_hat");
  for (int i : graph.key_nodes) {
    graph.key_edges.push_back(edge_list(edges.at(std::to_string(i))));
    graph.t_hat.push_back(t_hat.at(std::to_string(i)).get<int>());
  }

  // Anchor keys are node ids; std::map sorts them as strings, so collect and
  // re-sort numerically.
  std::vector<int> non_key;
  for (const auto& [key, value] : j.at("anchors").items())
    non_key.push_back(std::stoi(key));
  std::sort(non_key.begin(), non_key.end());
  graph.non_key_nodes = non_key;
  const json& t_ref = j.at("t_ref");
  for (int i : non_key) {
    const std::string key = std::to_string(i);
    graph.anchor.push_back(j.at("anchors").at(key).get<int>());
    graph.inherited_edges.push_back(edge_list(edges.at(key)));
    graph.t_ref.push_back(t_ref.at(key).get<int>());
  }
  return graph;
}

namespace {
std::string read_file_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

void save_graph(const MotionGraph& graph, const std::string& path,
                const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize_graph(graph, config_hash);
  if (!out) throw IoError("failed writing '" + path + "'");
}

MotionGraph load_graph(const std::string& path) {
  return deserialize_graph(read_file_or_throw(path));
}

}  // namespace usplat
