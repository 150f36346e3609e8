#pragma once

#include "usplat/render.hpp"
#include "usplat/scene.hpp"

#include <optional>
#include <string>
#include <vector>

namespace usplat {

struct UncertaintyParams {
  double eta_c = 0.05;  // per-pixel L1 convergence threshold
  double phi = 1e6;     // uncertainty assigned without converged evidence
  Vec3 r = Vec3(1.0, 1.0, 4.0);  // camera-frame axis inflation, z = optical axis
  bool fractional_indicator = false;
  double indicator_fraction = 0.9;  // used only by the fractional variant
};

// Scalar and directional uncertainty per Gaussian per frame.  Directional
// matrices are derived data: they are rebuilt from u and the frame's camera.
struct UncertaintyField {
  int gaussian_count = 0;
  int frame_count = 0;
  std::vector<double> u;           // gaussian_count * frame_count
  std::vector<uint8_t> converged;  // same layout
  UncertaintyParams params;

  double scalar(int gaussian, int frame) const {
    return u[static_cast<size_t>(gaussian) * frame_count + frame];
  }
  bool is_converged(int gaussian, int frame) const {
    return converged[static_cast<size_t>(gaussian) * frame_count + frame] != 0;
  }
};

// Inverse summed squared blend weight.  Empty weight lists signal no coverage.
std::optional<double> scalar_variance(const std::vector<double>& weights);

// 1 where the rendered pixel matches the reference within eta_c in L1 over the
// three channels (strict inequality).
std::vector<uint8_t> pixel_convergence(const Image& rendered, const Image& truth,
                                       double eta_c);

// Per-Gaussian convergence over the pixels it covers in the record.  The
// default requires every covered pixel to be convergent; the fractional
// variant requires at least the configured fraction.  Gaussians covering no
// pixel report 0.
std::vector<uint8_t> gaussian_indicator(const WeightRecord& record,
                                        const std::vector<uint8_t>& convergence,
                                        const UncertaintyParams& params);

double scalar_uncertainty(std::optional<double> variance, bool converged, double phi);

// U = R_wc diag(r * u) R_wc^T, inflating along the camera axes.
Mat3 anisotropic_uncertainty(double u, const Camera& cam, const Vec3& r);
// Closed-form inverse of the above.
Mat3 inverse_uncertainty(double u, const Camera& cam, const Vec3& r);

// Full field over a sequence: renders the model on the input cameras, compares
// with the reference images, and combines variance with convergence.  The
// visibility masks describe what the input view can observe.
UncertaintyField estimate_field(const Model& model, const std::vector<Camera>& input_cameras,
                                const std::vector<Image>& truth, const RenderOptions& ropts,
                                const UncertaintyParams& params,
                                const std::vector<std::vector<uint8_t>>* visibility = nullptr,
                                int threads = 1);

std::string serialize_field(const UncertaintyField& field, const std::string& config_hash);
UncertaintyField deserialize_field(const std::string& text);
void save_field(const UncertaintyField& field, const std::string& path,
                const std::string& config_hash);
UncertaintyField load_field(const std::string& path);

}  // namespace usplat
