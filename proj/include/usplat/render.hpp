#pragma once

#include "usplat/scene.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace usplat {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // RGB interleaved, row major, values in [0, 1]

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), data(3 * w * h, fill) {}

  double& at(int x, int y, int c) { return data[3 * (y * width + x) + c]; }
  double at(int x, int y, int c) const { return data[3 * (y * width + x) + c]; }
  int pixels() const { return width * height; }
  bool same_shape(const Image& other) const {
    return width == other.width && height == other.height;
  }
};

struct RenderOptions {
  double near_plane = 0.01;
  double weight_floor = 1e-4;   // record cutoff for blend weights
  double alpha_clamp = 0.999;   // per-pixel Gaussian weight ceiling
  double eig_floor = 0.3;       // minimum projected covariance eigenvalue, px^2
  Vec3 background = Vec3(0.5, 0.5, 0.5);
};

struct Splat2D {
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  double depth = 0.0;
  double opacity = 0.0;
  Vec3 color = Vec3::Zero();
  int index = 0;  // position in the input state list
};

// One recorded pixel contribution: transmittance ahead of the Gaussian and the
// blend weight it realized there.
struct PixelWeight {
  int pixel = 0;  // y * width + x
  double transmittance = 0.0;
  double weight = 0.0;
};

struct WeightRecord {
  int frame = 0;
  std::vector<std::vector<PixelWeight>> per_gaussian;
};

struct FrameRender {
  Image image;
  WeightRecord record;
  // Full per-pixel sums, independent of the record cutoff.  For every pixel
  // weight_sum + transmittance == 1 up to roundoff.
  std::vector<double> weight_sum;
  std::vector<double> transmittance;
};

// EWA projection of one Gaussian.  Returns nothing when the Gaussian is behind
// the near plane or its 3-sigma footprint misses the image.
std::optional<Splat2D> project_gaussian(const GaussianState& g, const Camera& cam,
                                        const RenderOptions& opts, int index = 0);

// Front-to-back alpha blending over a global depth sort (ties broken by input
// index).  `active`, when given, must match the state count; zero entries are
// skipped.
FrameRender render_frame(std::span<const GaussianState> states, const Camera& cam,
                         const RenderOptions& opts,
                         const std::vector<uint8_t>* active = nullptr);

struct SequenceRender {
  std::vector<Image> images;
  std::vector<WeightRecord> records;
};

// Renders every frame of the model; cameras.size() must equal the frame count.
// Per-frame visibility masks are optional; frames render independently so a
// thread count above one changes nothing but wall time.
SequenceRender render_sequence(const Model& model, const std::vector<Camera>& cameras,
                               const RenderOptions& opts,
                               const std::vector<std::vector<uint8_t>>* active = nullptr,
                               int threads = 1);

// 8-bit binary PPM with rounding by nearest.  Identical images produce
// identical bytes.
void write_ppm(const Image& img, const std::string& path, const std::string& comment = "");
Image read_ppm(const std::string& path);

}  // namespace usplat
