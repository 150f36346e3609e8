#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "usplat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace usplat;

namespace {

// Static model on a jittered grid: spacing far above the voxel size keeps
// every Gaussian in its own voxel, so key selection is fully predictable.
Model grid_model(int n, int frames, Rng& rng) {
  Model model(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 base(0.3 * (i % 4), 0.3 * ((i / 4) % 4), 0.3 * (i / 16));
    const Vec3 p = base + rng.ball(0.05);
    const Vec4 q = rng.unit_quaternion();
    for (int t = 0; t < frames; ++t) {
      model[i].positions.push_back(p);
      model[i].rotations.push_back(q);
    }
    model[i].scale = Vec3::Constant(0.02);
  }
  return model;
}

std::vector<Camera> ring_cameras(int frames) {
  std::vector<Camera> cams;
  for (int t = 0; t < frames; ++t) {
    const double az = 2.0 * M_PI * t / frames;
    const Vec3 eye(3.0 * std::cos(az), 3.0 * std::sin(az), 1.2);
    cams.push_back(look_at_camera(eye, Vec3(0.45, 0.45, 0.3), 64.0, 32, 32));
  }
  return cams;
}

UncertaintyField constant_field(int n, int frames, const std::vector<double>& per_gaussian) {
  UncertaintyField f;
  f.gaussian_count = n;
  f.frame_count = frames;
  f.u.resize(static_cast<size_t>(n) * frames);
  f.converged.assign(f.u.size(), 1);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < frames; ++t) f.u[static_cast<size_t>(i) * frames + t] = per_gaussian[i];
  return f;
}

// Independent metric: the full matrix sum of the two directional uncertainties.
double oracle_distance(const Model& model, const UncertaintyField& field, int i, int j,
                       int t, const Camera& cam, bool inverse) {
  const Mat3 Ui = anisotropic_uncertainty(field.scalar(i, t), cam, field.params.r);
  const Mat3 Uj = anisotropic_uncertainty(field.scalar(j, t), cam, field.params.r);
  const Mat3 M = inverse ? (Ui + Uj).inverse() : Mat3(Ui + Uj);
  return mahalanobis_distance(model[i].positions[t], model[j].positions[t], M);
}

}  // namespace

TEST_CASE("mahalanobis distance matches the quadratic form") {
  const Vec3 x(1, 2, 3), y(0, 0, 1);
  CHECK(mahalanobis_distance(x, y, Mat3::Identity()) ==
        doctest::Approx((x - y).norm()).epsilon(1e-15));

  Mat3 diag = Vec3(4.0, 1.0, 0.25).asDiagonal();
  // d = (1, 2, 2): q = 4 + 4 + 1 = 9.
  CHECK(mahalanobis_distance(x, y, diag) == doctest::Approx(3.0).epsilon(1e-15));

  Mat3 bad = Mat3::Identity();
  bad(2, 2) = -1.0;
  // d = (0, 0, 3) makes the form negative.
  CHECK_THROWS_AS(mahalanobis_distance(x, Vec3(1, 2, 0), bad), NumericError);
}

TEST_CASE("uncertainty threshold takes the confidence quantile of finite values") {
  const int n = 10, frames = 1;
  std::vector<double> vals;
  for (int i = 0; i < n; ++i) vals.push_back(1.0 + i);
  UncertaintyField f = constant_field(n, frames, vals);
  // llround(0.2 * 10) = 2 -> third smallest.
  CHECK(uncertainty_threshold(f, 0.2) == doctest::Approx(3.0).epsilon(1e-15));

  // The fraction budgets nodes, not entries: one Gaussian that is confident
  // in every frame must not crowd out the others' single best frames.
  UncertaintyField mix;
  mix.gaussian_count = 4;
  mix.frame_count = 4;
  mix.u = {1, 1, 1, 1, 2, 50, 50, 50, 3, 50, 50, 50, 4, 50, 50, 50};
  mix.converged.assign(16, 1);
  // Per-Gaussian minima {1, 2, 3, 4}; llround(0.5 * 4) = 2 -> 3.0.  The raw
  // entry quantile would land far above, inside the 50s.
  CHECK(uncertainty_threshold(mix, 0.5) == doctest::Approx(3.0).epsilon(1e-15));

  // With a period requirement the rank value is the min_period-th smallest
  // entry, so a single dip cannot buy a node into the budget.
  UncertaintyField runs;
  runs.gaussian_count = 3;
  runs.frame_count = 4;
  runs.u = {1, 1, 1, 1, 2, 2, 50, 50, 3, 50, 50, 50};
  runs.converged.assign(12, 1);
  // Rank values at min_period 2: {1, 2, 50}; llround(0.34 * 3) = 1 -> 2.0.
  CHECK(uncertainty_threshold(runs, 0.34, 2) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(uncertainty_threshold(runs, 0.5, 0), ConfigError);
  // High fractions clamp to the largest finite value.
  CHECK(uncertainty_threshold(f, 0.99) == doctest::Approx(10.0).epsilon(1e-15));

  // Values at phi do not count as evidence.
  f.u[5] = f.params.phi;
  CHECK(uncertainty_threshold(f, 0.2) == doctest::Approx(3.0).epsilon(1e-15));

  CHECK_THROWS_AS(uncertainty_threshold(f, 0.0), ConfigError);
  CHECK_THROWS_AS(uncertainty_threshold(f, 1.0), ConfigError);
  UncertaintyField empty = constant_field(2, 1, {f.params.phi, f.params.phi});
  CHECK_THROWS_AS(uncertainty_threshold(empty, 0.5), ConfigError);
}

TEST_CASE("significant period counts frames under the threshold") {
  UncertaintyField f;
  f.gaussian_count = 1;
  f.frame_count = 7;
  f.u = {0.1, 0.9, 0.1, 0.1, 0.1, 0.9, 0.1};
  f.converged.assign(7, 1);
  CHECK(significant_period(f, 0, 0.5, false) == 5);
  CHECK(significant_period(f, 0, 0.5, true) == 3);
  // The comparison is strict.
  CHECK(significant_period(f, 0, 0.1, false) == 0);
}

TEST_CASE("voxel winners keep the most confident Gaussian") {
  const int frames = 1;
  Model model(3);
  for (auto& traj : model) {
    traj.positions = {Vec3::Zero()};
    traj.rotations = {quat_identity()};
  }
  model[2].positions[0] = Vec3(5, 0, 0);  // its own voxel

  UncertaintyField f = constant_field(3, frames, {0.3, 0.2, 0.4});
  auto picked = select_key_candidates(model, f, 1.0, 1.0);
  CHECK(picked == std::vector<int>{1, 2});

  // Equal confidence falls back to the lower index.
  f = constant_field(3, frames, {0.3, 0.3, 0.4});
  picked = select_key_candidates(model, f, 1.0, 1.0);
  CHECK(picked == std::vector<int>{0, 2});

  // Nothing under the threshold, nothing selected.
  picked = select_key_candidates(model, f, 0.1, 1.0);
  CHECK(picked.empty());
  CHECK_THROWS_AS(select_key_candidates(model, f, 1.0, 0.0), ConfigError);
}

TEST_CASE("key finalization filters by period and records the best frame") {
  UncertaintyField f;
  f.gaussian_count = 2;
  f.frame_count = 4;
  //                 g0: 3 frames under 0.5, best at t=2; g1: only 1.
  f.u = {0.4, 0.3, 0.1, 0.9, 0.4, 0.9, 0.9, 0.9};
  f.converged.assign(8, 1);

  GraphParams params;
  params.min_period = 3;
  std::vector<int> keys, t_hat;
  finalize_key_set({0, 1}, f, 0.5, params, &keys, &t_hat);
  CHECK(keys == std::vector<int>{0});
  CHECK(t_hat == std::vector<int>{2});

  params.min_period = 2;
  finalize_key_set({0, 1}, f, 0.5, params, &keys, &t_hat);
  CHECK(keys == std::vector<int>{0});

  params.min_period = 4;
  CHECK_THROWS_AS(finalize_key_set({0, 1}, f, 0.5, params, &keys, &t_hat), ConfigError);
}

TEST_CASE("edge weights follow a median-bandwidth Gaussian kernel") {
  Model model(4);
  model[0].positions = {Vec3::Zero()};
  model[1].positions = {Vec3(1, 0, 0)};
  model[2].positions = {Vec3(0, 2, 0)};
  model[3].positions = {Vec3(0, 0, 3)};
  for (auto& traj : model) traj.rotations = {quat_identity()};

  const auto w = edge_weights(model, 0, {1, 2, 3}, 0);
  // Median distance 2: weights proportional to exp(-d^2 / 8).
  const double e1 = std::exp(-1.0 / 8.0), e2 = std::exp(-4.0 / 8.0),
               e3 = std::exp(-9.0 / 8.0);
  const double s = e1 + e2 + e3;
  CHECK(w[0] == doctest::Approx(e1 / s).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(e2 / s).epsilon(1e-12));
  CHECK(w[2] == doctest::Approx(e3 / s).epsilon(1e-12));
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-12));

  // A majority of coincident neighbors collapses the median bandwidth; the
  // kernel limit puts all mass on the closest ones.
  Model stack(4);
  for (auto& traj : stack) {
    traj.positions = {Vec3::Zero()};
    traj.rotations = {quat_identity()};
  }
  stack[3].positions[0] = Vec3(1, 0, 0);
  const auto w2 = edge_weights(stack, 0, {1, 2, 3}, 0);
  CHECK(w2[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w2[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w2[2] == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(edge_weights(model, 0, {}, 0), ShapeError);
}

TEST_CASE("graph construction matches a brute force over the full metric") {
  const int n = 30, frames = 5;
  Rng rng(211);
  const Model model = grid_model(n, frames, rng);
  const auto cams = ring_cameras(frames);

  // Distinct confidence per Gaussian, scrambled against spatial order, with a
  // per-key dip that moves the most confident frame around.
  std::vector<double> base(n);
  for (int i = 0; i < n; ++i) base[i] = 0.5 + 0.05 * ((i * 13) % n);
  UncertaintyField field = constant_field(n, frames, base);
  for (int i = 0; i < n; ++i)
    field.u[static_cast<size_t>(i) * frames + i % frames] -= 0.02;

  GraphParams params;
  params.key_fraction = 0.5;
  params.min_period = frames;
  params.k = 4;

  const MotionGraph graph = build_motion_graph(model, field, cams, params);

  // The threshold splits the constant-confidence Gaussians exactly.
  const std::set<int> keys(graph.key_nodes.begin(), graph.key_nodes.end());
  for (int i = 0; i < n; ++i) {
    const bool expect = base[i] - 0.02 < graph.eta_u && base[i] < graph.eta_u;
    CHECK(keys.count(i) == static_cast<size_t>(expect ? 1 : 0));
  }
  REQUIRE(graph.key_nodes.size() > static_cast<size_t>(params.k));
  CHECK(graph.key_nodes.size() + graph.non_key_nodes.size() == static_cast<size_t>(n));

  // The dip decides the most confident frame.
  for (size_t ki = 0; ki < graph.key_nodes.size(); ++ki)
    CHECK(graph.t_hat[ki] == graph.key_nodes[ki] % frames);

  // Neighbor sets equal the k smallest under the independently built metric.
  for (size_t ki = 0; ki < graph.key_nodes.size(); ++ki) {
    const int i = graph.key_nodes[ki];
    const int th = graph.t_hat[ki];
    std::vector<std::pair<double, int>> dist;
    for (int j : graph.key_nodes) {
      if (j == i) continue;
      dist.emplace_back(oracle_distance(model, field, i, j, th, cams[th], false), j);
    }
    std::sort(dist.begin(), dist.end());
    std::set<int> expect;
    for (int e = 0; e < params.k; ++e) expect.insert(dist[e].second);
    std::set<int> got;
    for (const auto& edge : graph.key_edges[ki]) got.insert(edge.target);
    CHECK(got == expect);

    // Weights come from the kernel at the same reference frame.
    std::vector<int> targets;
    for (const auto& edge : graph.key_edges[ki]) targets.push_back(edge.target);
    const auto w = edge_weights(model, i, targets, th);
    double sum = 0.0;
    for (size_t e = 0; e < targets.size(); ++e) {
      CHECK(graph.key_edges[ki][e].weight == doctest::Approx(w[e]).epsilon(1e-12));
      sum += graph.key_edges[ki][e].weight;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  // Anchors minimize the summed metric over all frames; the reference frame
  // minimizes it pointwise.
  for (size_t m = 0; m < graph.non_key_nodes.size(); ++m) {
    const int i = graph.non_key_nodes[m];
    int best_key = -1;
    double best_sum = 0.0;
    for (int l : graph.key_nodes) {
      double sum = 0.0;
      for (int t = 0; t < frames; ++t)
        sum += oracle_distance(model, field, i, l, t, cams[t], false);
      if (best_key < 0 || sum < best_sum) {
        best_key = l;
        best_sum = sum;
      }
    }
    CHECK(graph.anchor[m] == best_key);

    int ref = 0;
    double best_d = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double d = oracle_distance(model, field, i, best_key, t, cams[t], false);
      if (t == 0 || d < best_d) {
        best_d = d;
        ref = t;
      }
    }
    CHECK(graph.t_ref[m] == ref);

    // The anchor leads its inherited set.
    REQUIRE(!graph.inherited_edges[m].empty());
    CHECK(graph.inherited_edges[m][0].target == best_key);
    CHECK(graph.inherited_edges[m].size() == static_cast<size_t>(params.k + 1));
  }

  // Asking for more neighbors than keys exist is a configuration error.
  GraphParams too_many = params;
  too_many.k = static_cast<int>(graph.key_nodes.size());
  CHECK_THROWS_AS(build_motion_graph(model, field, cams, too_many), ConfigError);

  // Mismatched shapes are rejected.
  UncertaintyField wrong = field;
  wrong.gaussian_count = n - 1;
  CHECK_THROWS_AS(build_motion_graph(model, wrong, cams, params), ShapeError);
  std::vector<Camera> short_cams(cams.begin(), cams.end() - 1);
  CHECK_THROWS_AS(build_motion_graph(model, field, short_cams, params), ShapeError);
}

TEST_CASE("equal confidence reduces the metric to a Euclidean ordering") {
  const int n = 40, frames = 5;
  Rng rng(212);
  const Model model = grid_model(n, frames, rng);
  const auto cams = ring_cameras(frames);

  // Three quarters share one confidence; the rest sit above the threshold.
  // With equal confidences and isotropic inflation the metric is a multiple
  // of the identity, so the ranking must be plain Euclidean.
  std::vector<double> base(n, 1.0);
  for (int i = 30; i < n; ++i) base[i] = 5.0;
  UncertaintyField field = constant_field(n, frames, base);
  field.params.r = Vec3::Ones();

  GraphParams params;
  params.key_fraction = 0.8;  // quantile lands in the 5.0 block
  params.min_period = frames;
  params.k = 5;

  const MotionGraph graph = build_motion_graph(model, field, cams, params);
  REQUIRE(graph.key_nodes.size() == 30);

  for (size_t ki = 0; ki < graph.key_nodes.size(); ++ki) {
    const int i = graph.key_nodes[ki];
    const int th = graph.t_hat[ki];
    std::vector<std::pair<double, int>> dist;
    for (int j : graph.key_nodes) {
      if (j == i) continue;
      dist.emplace_back((model[i].positions[th] - model[j].positions[th]).norm(), j);
    }
    std::sort(dist.begin(), dist.end());
    std::set<int> expect;
    for (int e = 0; e < params.k; ++e) expect.insert(dist[e].second);
    std::set<int> got;
    for (const auto& edge : graph.key_edges[ki]) got.insert(edge.target);
    CHECK(got == expect);
  }
}

TEST_CASE("the inverse metric ranks like the direct one with inverted matrices") {
  const int n = 30, frames = 4;
  Rng rng(213);
  const Model model = grid_model(n, frames, rng);
  const auto cams = ring_cameras(frames);

  std::vector<double> base(n);
  for (int i = 0; i < n; ++i) base[i] = 0.5 + 0.05 * ((i * 7) % n);
  UncertaintyField field = constant_field(n, frames, base);

  GraphParams params;
  params.key_fraction = 0.5;
  params.min_period = frames;
  params.k = 4;
  params.inverse_metric = true;

  const MotionGraph graph = build_motion_graph(model, field, cams, params);
  for (size_t ki = 0; ki < graph.key_nodes.size(); ++ki) {
    const int i = graph.key_nodes[ki];
    const int th = graph.t_hat[ki];
    std::vector<std::pair<double, int>> dist;
    for (int j : graph.key_nodes) {
      if (j == i) continue;
      dist.emplace_back(oracle_distance(model, field, i, j, th, cams[th], true), j);
    }
    std::sort(dist.begin(), dist.end());
    std::set<int> expect;
    for (int e = 0; e < params.k; ++e) expect.insert(dist[e].second);
    std::set<int> got;
    for (const auto& edge : graph.key_edges[ki]) got.insert(edge.target);
    CHECK(got == expect);
  }
}

TEST_CASE("graph serialization round trips") {
  const int n = 30, frames = 5;
  Rng rng(214);
  const Model model = grid_model(n, frames, rng);
  const auto cams = ring_cameras(frames);
  std::vector<double> base(n);
  for (int i = 0; i < n; ++i) base[i] = 0.5 + 0.05 * ((i * 13) % n);
  UncertaintyField field = constant_field(n, frames, base);

  GraphParams params;
  params.key_fraction = 0.5;
  params.min_period = frames;
  params.k = 4;
  const MotionGraph graph = build_motion_graph(model, field, cams, params);

  const std::string text = serialize_graph(graph, "0123456789abcdef");
  const MotionGraph back = deserialize_graph(text);
  CHECK(back.key_nodes == graph.key_nodes);
  CHECK(back.non_key_nodes == graph.non_key_nodes);
  CHECK(back.t_hat == graph.t_hat);
  CHECK(back.t_ref == graph.t_ref);
  CHECK(back.anchor == graph.anchor);
  CHECK(back.eta_u == graph.eta_u);
  CHECK(back.params.k == graph.params.k);
  REQUIRE(back.key_edges.size() == graph.key_edges.size());
  for (size_t ki = 0; ki < graph.key_edges.size(); ++ki)
    for (size_t e = 0; e < graph.key_edges[ki].size(); ++e) {
      CHECK(back.key_edges[ki][e].target == graph.key_edges[ki][e].target);
      CHECK(back.key_edges[ki][e].weight == graph.key_edges[ki][e].weight);
    }
  REQUIRE(back.inherited_edges.size() == graph.inherited_edges.size());
  for (size_t m = 0; m < graph.inherited_edges.size(); ++m)
    for (size_t e = 0; e < graph.inherited_edges[m].size(); ++e) {
      CHECK(back.inherited_edges[m][e].target == graph.inherited_edges[m][e].target);
      CHECK(back.inherited_edges[m][e].weight == graph.inherited_edges[m][e].weight);
    }
  CHECK(serialize_graph(back, "0123456789abcdef") == text);

  // Lookup helpers agree with membership.
  for (int i = 0; i < n; ++i) {
    const bool is_key = std::find(graph.key_nodes.begin(), graph.key_nodes.end(), i) !=
                        graph.key_nodes.end();
    CHECK((graph.key_index(i) >= 0) == is_key);
    CHECK((graph.non_key_index(i) >= 0) == !is_key);
  }
}
