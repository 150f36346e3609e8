#include "usplat/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace usplat {

std::optional<Splat2D> project_gaussian(const GaussianState& g, const Camera& cam,
                                        const RenderOptions& opts, int index) {
  const Vec3 pc = cam.world_to_camera(g.position);
  if (pc[2] <= opts.near_plane) return std::nullopt;

  const double z = pc[2];
  const double inv_z = 1.0 / z;
  Splat2D s;
  s.mean = Vec2(cam.fx * pc[0] * inv_z + cam.cx, cam.fy * pc[1] * inv_z + cam.cy);
  s.depth = z;
  s.opacity = g.opacity;
  s.color = g.color;
  s.index = index;

  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx * inv_z, 0.0, -cam.fx * pc[0] * inv_z * inv_z,
         0.0, cam.fy * inv_z, -cam.fy * pc[1] * inv_z * inv_z;
  const Mat3 w = cam.R_wc.transpose();
  const Mat2 cov2 = jac * w * covariance_of(g) * w.transpose() * jac.transpose();

  // Clamp eigenvalues from below; keeps tiny splats at least a fraction of a
  // pixel wide and the inverse well conditioned.
  Eigen::SelfAdjointEigenSolver<Mat2> es(cov2);
  Vec2 ev = es.eigenvalues().cwiseMax(opts.eig_floor);
  s.cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();

  const double radius = 3.0 * std::sqrt(ev.maxCoeff());
  if (s.mean[0] + radius < 0.0 || s.mean[0] - radius > cam.width ||
      s.mean[1] + radius < 0.0 || s.mean[1] - radius > cam.height)
    return std::nullopt;
  return s;
}

FrameRender render_frame(std::span<const GaussianState> states, const Camera& cam,
                         const RenderOptions& opts, const std::vector<uint8_t>* active) {
  cam.validate();
  if (active && active->size() != states.size())
    throw ShapeError("visibility mask length does not match state count");

  const int w = cam.width, h = cam.height;
  FrameRender out;
  out.image = Image(w, h, 0.0);
  out.weight_sum.assign(w * h, 0.0);
  out.transmittance.assign(w * h, 1.0);
  out.record.per_gaussian.resize(states.size());

  std::vector<Splat2D> splats;
  splats.reserve(states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    if (active && !(*active)[i]) continue;
    if (auto s = project_gaussian(states[i], cam, opts, static_cast<int>(i)))
      splats.push_back(*s);
  }
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });

  for (const Splat2D& s : splats) {
    const double det = s.cov(0, 0) * s.cov(1, 1) - s.cov(0, 1) * s.cov(1, 0);
    const double ia = s.cov(1, 1) / det, ib = -s.cov(0, 1) / det, ic = s.cov(0, 0) / det;
    Eigen::SelfAdjointEigenSolver<Mat2> es(s.cov);
    const double radius = 3.0 * std::sqrt(es.eigenvalues().maxCoeff());
    const int x0 = std::max(0, static_cast<int>(std::floor(s.mean[0] - radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(s.mean[0] + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.mean[1] - radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(s.mean[1] + radius)));
    auto& rec = out.record.per_gaussian[s.index];

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = (x + 0.5) - s.mean[0];
        const double dy = (y + 0.5) - s.mean[1];
        const double e = -0.5 * (ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy);
        const double g = std::min(opts.alpha_clamp, s.opacity * std::exp(e));
        if (g <= 0.0) continue;
        const int pix = y * w + x;
        const double t = out.transmittance[pix];
        const double v = t * g;
        for (int c = 0; c < 3; ++c) out.image.data[3 * pix + c] += v * s.color[c];
        out.weight_sum[pix] += v;
        out.transmittance[pix] = t * (1.0 - g);
        if (v > opts.weight_floor) rec.push_back({pix, t, v});
      }
    }
  }

  for (int pix = 0; pix < w * h; ++pix) {
    const double t = out.transmittance[pix];
    for (int c = 0; c < 3; ++c) {
      double& v = out.image.data[3 * pix + c];
      v = std::clamp(v + t * opts.background[c], 0.0, 1.0);
    }
  }
  return out;
}

SequenceRender render_sequence(const Model& model, const std::vector<Camera>& cameras,
                               const RenderOptions& opts,
                               const std::vector<std::vector<uint8_t>>* active,
                               int threads) {
  const int frames = model_frames(model);
  if (static_cast<int>(cameras.size()) != frames)
    throw ShapeError("camera count does not match model frame count");
  if (active && static_cast<int>(active->size()) != frames)
    throw ShapeError("visibility mask count does not match model frame count");

  SequenceRender out;
  out.images.resize(frames);
  out.records.resize(frames);
  parallel_for(frames, threads, [&](int begin, int end) {
    for (int t = begin; t < end; ++t) {
      const auto states = states_at(model, t);
      FrameRender fr =
          render_frame(states, cameras[t], opts, active ? &(*active)[t] : nullptr);
      fr.record.frame = t;
      out.images[t] = std::move(fr.image);
      out.records[t] = std::move(fr.record);
    }
  });
  return out;
}

void write_ppm(const Image& img, const std::string& path, const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P6\n";
  if (!comment.empty()) out << "# " << comment << "\n";
  out << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(img.data.size());
  for (double v : img.data)
    bytes.push_back(
        static_cast<unsigned char>(std::llround(std::clamp(v, 0.0, 1.0) * 255.0)));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError("'" + path + "' is not a binary PPM");
  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw IoError("truncated PPM header in '" + path + "'");
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw IoError("unsupported PPM maxval in '" + path + "'");
  in.get();  // single whitespace after header
  std::vector<unsigned char> bytes(3 * w * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PPM data in '" + path + "'");
  Image img(w, h);
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

}  // namespace usplat
