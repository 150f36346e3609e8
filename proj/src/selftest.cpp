#include "usplat/deform.hpp"
#include "usplat/losses.hpp"
#include "usplat/pipeline.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

namespace usplat {

namespace {

Model random_model(Rng* rng, int count, int frames) {
  Model model(count);
  for (auto& traj : model) {
    traj.positions.resize(frames);
    traj.rotations.resize(frames);
    for (int t = 0; t < frames; ++t) {
      traj.positions[t] = rng->ball(1.0);
      traj.rotations[t] = rng->unit_quaternion();
    }
  }
  return model;
}

// Blended color seen through independent unit-variance pixel noise, solved by
// least squares; the estimator variance must match 1 / sum(v^2).
bool check_blend_variance(std::string* detail) {
  Rng rng(41);
  const std::vector<double> weights = {0.42, 0.23, 0.11, 0.05};
  double sum_sq = 0.0;
  for (double v : weights) sum_sq += v * v;
  const double predicted = 1.0 / sum_sq;

  const int trials = 6000;
  const double truth = 0.7;
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < trials; ++k) {
    double num = 0.0;
    for (double v : weights) num += v * (v * truth + rng.normal());
    const double estimate = num / sum_sq;
    const double delta = estimate - mean;
    mean += delta / (k + 1);
    m2 += delta * (estimate - mean);
  }
  const double empirical = m2 / (trials - 1);
  const double rel = std::abs(empirical - predicted) / predicted;
  std::ostringstream ss;
  ss << "relative error " << rel;
  *detail = ss.str();
  return rel < 0.1;
}

// Central finite differences over every position and rotation coordinate.
bool check_gradient(const std::function<double(const Model&, ModelGrad*)>& loss,
                    Model model, std::string* detail) {
  ModelGrad grad(model);
  grad.set_zero();
  loss(model, &grad);

  const double step = 1e-6;
  double worst = 0.0;
  const int frames = model_frames(model);
  for (size_t i = 0; i < model.size(); ++i) {
    for (int t = 0; t < frames; ++t) {
      for (int c = 0; c < 3; ++c) {
        double& x = model[i].positions[t][c];
        const double save = x;
        x = save + step;
        const double hi = loss(model, nullptr);
        x = save - step;
        const double lo = loss(model, nullptr);
        x = save;
        const double fd = (hi - lo) / (2.0 * step);
        const double a = grad.d_position[i][t][c];
        worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
      }
      for (int c = 0; c < 4; ++c) {
        double& x = model[i].rotations[t][c];
        const double save = x;
        x = save + step;
        const double hi = loss(model, nullptr);
        x = save - step;
        const double lo = loss(model, nullptr);
        x = save;
        const double fd = (hi - lo) / (2.0 * step);
        const double a = grad.d_rotation[i][t][c];
        worst = std::max(worst, std::abs(a - fd) / std::max(1.0, std::abs(fd)));
      }
    }
  }
  std::ostringstream ss;
  ss << "max relative error " << worst;
  *detail = ss.str();
  return worst < 1e-4;
}

bool check_dqb_single(std::string* detail) {
  Rng rng(43);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    RigidTransform T;
    T.rotation = rng.unit_quaternion();
    T.translation = rng.ball(2.0);
    const std::vector<RigidTransform> transforms = {T};
    const std::vector<double> weights = {1.0};
    const RigidTransform back = dqb(weights, transforms);
    worst = std::max(worst,
                     (align_hemisphere(back.rotation) - align_hemisphere(T.rotation)).norm());
    worst = std::max(worst, (back.translation - T.translation).norm());
  }
  std::ostringstream ss;
  ss << "max deviation " << worst;
  *detail = ss.str();
  return worst < 1e-12;
}

bool check_dqb_coaxial(std::string* detail) {
  Rng rng(44);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Vec3 axis = rng.unit_vector();
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    RigidTransform A, B;
    A.rotation = quat_from_axis_angle(axis, a);
    B.rotation = quat_from_axis_angle(axis, b);
    const std::vector<RigidTransform> transforms = {A, B};
    const std::vector<double> weights = {0.5, 0.5};
    const RigidTransform blend = dqb(weights, transforms);
    const Vec4 expected = quat_from_axis_angle(axis, 0.5 * (a + b));
    worst = std::max(worst, (align_hemisphere(blend.rotation) -
                             align_hemisphere(expected)).norm());
  }
  std::ostringstream ss;
  ss << "max deviation " << worst;
  *detail = ss.str();
  return worst < 1e-9;
}

bool check_conservation(std::string* detail) {
  SceneConfig sc;
  sc.gaussian_count = 40;
  sc.frame_count = 3;
  sc.image_width = 48;
  sc.image_height = 48;
  sc.preset = MotionPreset::kArticulated;
  sc.seed = 45;
  const SyntheticScene scene = make_orbit_scene(sc);
  const RenderOptions opts;
  const FrameRender fr = render_frame(states_at(scene.truth, 1), scene.input_cameras[1], opts);
  double worst = 0.0;
  for (int p = 0; p < fr.image.pixels(); ++p)
    worst = std::max(worst, std::abs(fr.weight_sum[p] + fr.transmittance[p] - 1.0));
  std::ostringstream ss;
  ss << "max per-pixel deviation " << worst;
  *detail = ss.str();
  return worst < 1e-6;
}

}  // namespace

int run_selftest(std::ostream& out) {
  struct Check {
    const char* name;
    std::function<bool(std::string*)> fn;
  };

  Rng rng(42);
  const Model grad_model = random_model(&rng, 4, 4);
  const NeighborSet nbrs = euclidean_neighbor_set(grad_model, 0, 2);

  const std::vector<Check> checks = {
      {"blend-variance formula vs Monte Carlo", check_blend_variance},
      {"isometry loss gradient vs finite differences",
       [&](std::string* d) {
         return check_gradient(
             [&](const Model& m, ModelGrad* g) { return iso_loss(m, nbrs, 0, 1.0, g); },
             grad_model, d);
       }},
      {"rigidity loss gradient vs finite differences",
       [&](std::string* d) {
         return check_gradient(
             [&](const Model& m, ModelGrad* g) { return rigid_loss(m, nbrs, 1, 1.0, g); },
             grad_model, d);
       }},
      {"dual quaternion blend, single input", check_dqb_single},
      {"dual quaternion blend, coaxial average", check_dqb_coaxial},
      {"renderer weight conservation", check_conservation},
  };

  int failures = 0;
  for (const auto& check : checks) {
    std::string detail;
    const bool ok = check.fn(&detail);
    if (ok) {
      out << "ok   " << check.name << " (" << detail << ")\n";
    } else {
      ++failures;
      out << "FAIL " << check.name << " (" << detail << ")\n";
    }
  }
  out << (failures == 0 ? "selftest passed" : "selftest FAILED") << ": "
      << checks.size() - failures << "/" << checks.size() << " checks\n";
  return failures;
}

}  // namespace usplat
