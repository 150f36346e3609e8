#include "usplat/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace usplat {

using nlohmann::json;

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr images differ in shape");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

using Plane = std::vector<double>;

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> k(window);
  const int half = window / 2;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

void conv_h(const Plane& in, Plane& out, int w, int h, const std::vector<double>& k) {
  const int half = static_cast<int>(k.size()) / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (size_t i = 0; i < k.size(); ++i)
        s += k[i] * in[y * w + reflect101(x + static_cast<int>(i) - half, w)];
      out[y * w + x] = s;
    }
}

void conv_v(const Plane& in, Plane& out, int w, int h, const std::vector<double>& k) {
  const int half = static_cast<int>(k.size()) / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (size_t i = 0; i < k.size(); ++i)
        s += k[i] * in[reflect101(y + static_cast<int>(i) - half, h) * w + x];
      out[y * w + x] = s;
    }
}

void conv2(const Plane& in, Plane& out, Plane& scratch, int w, int h,
           const std::vector<double>& k) {
  conv_h(in, scratch, w, h, k);
  conv_v(scratch, out, w, h, k);
}

// Adjoints of the reflected convolutions: scatter with the same index map.
void conv_h_adj(const Plane& in, Plane& out, int w, int h, const std::vector<double>& k) {
  std::fill(out.begin(), out.end(), 0.0);
  const int half = static_cast<int>(k.size()) / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = in[y * w + x];
      if (g == 0.0) continue;
      for (size_t i = 0; i < k.size(); ++i)
        out[y * w + reflect101(x + static_cast<int>(i) - half, w)] += k[i] * g;
    }
}

void conv_v_adj(const Plane& in, Plane& out, int w, int h, const std::vector<double>& k) {
  std::fill(out.begin(), out.end(), 0.0);
  const int half = static_cast<int>(k.size()) / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double g = in[y * w + x];
      if (g == 0.0) continue;
      for (size_t i = 0; i < k.size(); ++i)
        out[reflect101(y + static_cast<int>(i) - half, h) * w + x] += k[i] * g;
    }
}

void conv2_adj(const Plane& in, Plane& out, Plane& scratch, int w, int h,
               const std::vector<double>& k) {
  conv_v_adj(in, scratch, w, h, k);
  conv_h_adj(scratch, out, w, h, k);
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimOptions& opts, Image* grad_a) {
  if (!a.same_shape(b)) throw ShapeError("ssim images differ in shape");
  const int w = a.width, h = a.height;
  const int half = opts.window / 2;
  if (w <= half || h <= half)
    throw ShapeError("image too small for the SSIM window");
  const auto kernel = gaussian_kernel(opts.window, opts.sigma);
  const int np = w * h;

  if (grad_a) {
    *grad_a = Image(w, h, 0.0);
  }

  Plane x(np), y(np), mx(np), my(np), sxx(np), syy(np), sxy(np), tmp(np), scratch(np);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int p = 0; p < np; ++p) {
      x[p] = a.data[3 * p + c];
      y[p] = b.data[3 * p + c];
    }
    conv2(x, mx, scratch, w, h, kernel);
    conv2(y, my, scratch, w, h, kernel);
    for (int p = 0; p < np; ++p) tmp[p] = x[p] * x[p];
    conv2(tmp, sxx, scratch, w, h, kernel);
    for (int p = 0; p < np; ++p) tmp[p] = y[p] * y[p];
    conv2(tmp, syy, scratch, w, h, kernel);
    for (int p = 0; p < np; ++p) tmp[p] = x[p] * y[p];
    conv2(tmp, sxy, scratch, w, h, kernel);

    Plane g_mx, g_sxx, g_sxy;
    if (grad_a) {
      g_mx.assign(np, 0.0);
      g_sxx.assign(np, 0.0);
      g_sxy.assign(np, 0.0);
    }
    const double go = 1.0 / (3.0 * np);
    for (int p = 0; p < np; ++p) {
      const double vx = sxx[p] - mx[p] * mx[p];
      const double vy = syy[p] - my[p] * my[p];
      const double vxy = sxy[p] - mx[p] * my[p];
      const double a1 = 2.0 * mx[p] * my[p] + opts.c1;
      const double a2 = 2.0 * vxy + opts.c2;
      const double b1 = mx[p] * mx[p] + my[p] * my[p] + opts.c1;
      const double b2 = vx + vy + opts.c2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad_a) {
        const double ga1 = go * a2 / (b1 * b2);
        const double ga2 = go * a1 / (b1 * b2);
        const double gb1 = -go * s / b1;
        const double gb2 = -go * s / b2;
        const double gvxy = 2.0 * ga2;
        g_mx[p] = ga1 * 2.0 * my[p] + gb1 * 2.0 * mx[p] - gb2 * 2.0 * mx[p] -
                  gvxy * my[p];
        g_sxx[p] = gb2;
        g_sxy[p] = gvxy;
      }
    }
    if (grad_a) {
      conv2_adj(g_mx, tmp, scratch, w, h, kernel);
      for (int p = 0; p < np; ++p) grad_a->data[3 * p + c] += tmp[p];
      conv2_adj(g_sxx, tmp, scratch, w, h, kernel);
      for (int p = 0; p < np; ++p) grad_a->data[3 * p + c] += 2.0 * x[p] * tmp[p];
      conv2_adj(g_sxy, tmp, scratch, w, h, kernel);
      for (int p = 0; p < np; ++p) grad_a->data[3 * p + c] += y[p] * tmp[p];
    }
  }
  return total / (3.0 * np);
}

std::vector<TrackQuery> all_queries(const Model& model) {
  std::vector<TrackQuery> out;
  const int frames = model_frames(model);
  out.reserve(model.size() * frames);
  for (size_t i = 0; i < model.size(); ++i)
    for (int t = 0; t < frames; ++t) out.emplace_back(static_cast<int>(i), t);
  return out;
}

std::vector<TrackQuery> occluded_queries(const SyntheticScene& scene) {
  std::vector<TrackQuery> out;
  for (size_t i = 0; i < scene.occlusion.size(); ++i)
    for (const auto& iv : scene.occlusion[i])
      for (int t = iv.begin; t < iv.end; ++t) out.emplace_back(static_cast<int>(i), t);
  return out;
}

double epe(const Model& model, const Model& truth, const std::vector<TrackQuery>& queries) {
  if (model.size() != truth.size()) throw ShapeError("epe model/truth size mismatch");
  if (queries.empty()) throw ShapeError("epe over an empty query set");
  double sum = 0.0;
  for (const auto& [i, t] : queries)
    sum += (model[i].positions[t] - truth[i].positions[t]).norm();
  return sum / static_cast<double>(queries.size());
}

double pck(const Model& model, const Model& truth, const std::vector<TrackQuery>& queries,
           double threshold) {
  if (model.size() != truth.size()) throw ShapeError("pck model/truth size mismatch");
  if (queries.empty()) throw ShapeError("pck over an empty query set");
  int hit = 0;
  for (const auto& [i, t] : queries)
    if ((model[i].positions[t] - truth[i].positions[t]).norm() <= threshold) ++hit;
  return static_cast<double>(hit) / static_cast<double>(queries.size());
}

int view_bucket(double offset_deg) {
  double o = std::fmod(std::abs(offset_deg), 360.0);
  o = std::min(o, 360.0 - o);
  if (o <= 0.0) throw ConfigError("view offset of zero has no bucket");
  if (o <= 60.0) return 0;
  if (o <= 120.0) return 1;
  return 2;
}

std::string bucket_label(int bucket) {
  switch (bucket) {
    case 0: return "0_60";
    case 1: return "60_120";
    case 2: return "120_180";
  }
  throw ConfigError("unknown view bucket");
}

MetricReport view_range_eval(const Model& model, const SyntheticScene& scene,
                             const RenderOptions& ropts, int threads) {
  if (model.size() != scene.truth.size())
    throw ShapeError("model does not match the scene Gaussian count");
  if (model_frames(model) != scene.frame_count)
    throw ShapeError("model does not match the scene frame count");
  if (scene.eval_cameras.empty()) throw ConfigError("scene has no held-out cameras");

  MetricReport report;
  const int frames = scene.frame_count;
  const int ncam = static_cast<int>(scene.eval_cameras.size());
  report.views.resize(ncam);

  parallel_for(ncam, threads, [&](int begin, int end) {
    for (int v = begin; v < end; ++v) {
      const Camera& cam = scene.eval_cameras[v];
      double psnr_sum = 0.0, ssim_sum = 0.0;
      int inexact = 0;
      for (int t = 0; t < frames; ++t) {
        const auto model_states = states_at(model, t);
        const auto truth_states = states_at(scene.truth, t);
        const Image rendered = render_frame(model_states, cam, ropts).image;
        const Image reference = render_frame(truth_states, cam, ropts).image;
        const double p = psnr(rendered, reference);
        if (std::isfinite(p)) {
          ++inexact;
          psnr_sum += p;
        }
        ssim_sum += ssim(rendered, reference);
      }
      ViewMetrics vm;
      vm.camera = v;
      vm.offset_deg = scene.eval_offsets_deg[v];
      vm.bucket = view_bucket(vm.offset_deg);
      vm.exact = inexact == 0;
      // A partially exact camera averages PSNR over its inexact frames.
      vm.psnr_db = vm.exact ? std::numeric_limits<double>::infinity() : psnr_sum / inexact;
      vm.ssim = ssim_sum / frames;
      report.views[v] = vm;
    }
  });

  for (int b = 0; b < 3; ++b) {
    BucketMetrics bm;
    bm.bucket = b;
    int inexact = 0;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const auto& vm : report.views) {
      if (vm.bucket != b) continue;
      ++bm.cameras;
      ssim_sum += vm.ssim;
      if (!vm.exact) {
        ++inexact;
        psnr_sum += vm.psnr_db;
      }
    }
    if (bm.cameras == 0) continue;
    // Exact cameras have no finite PSNR to contribute; average the rest.
    bm.exact = inexact == 0;
    bm.psnr_db =
        bm.exact ? std::numeric_limits<double>::infinity() : psnr_sum / inexact;
    bm.ssim = ssim_sum / bm.cameras;
    report.buckets.push_back(bm);
  }
  return report;
}

MetricReport eval_checkpoint(const Model& model, const SyntheticScene& scene,
                             const RenderOptions& ropts,
                             const std::vector<PckThreshold>& thresholds, int threads) {
  MetricReport report = view_range_eval(model, scene, ropts, threads);
  report.epe_all = epe(model, scene.truth, all_queries(model));
  const auto occluded = occluded_queries(scene);
  report.has_occluded = !occluded.empty();
  if (report.has_occluded) report.epe_occluded = epe(model, scene.truth, occluded);

  Vec3 lo, hi;
  model_bounds(scene.truth, &lo, &hi);
  const double diag = (hi - lo).norm();
  const auto all = all_queries(model);
  for (const auto& th : thresholds) {
    const double value = th.fraction_of_diagonal ? th.value * diag : th.value;
    char name[64];
    std::snprintf(name, sizeof(name), th.fraction_of_diagonal ? "pck_diag_%g" : "pck_abs_%g",
                  th.value);
    report.pck_values.emplace_back(name, pck(model, scene.truth, all, value));
  }
  return report;
}

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metric_report_csv(const MetricReport& report, const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n";
  out += "kind,name,offset_deg,psnr_db,exact,ssim,value\n";
  for (const auto& vm : report.views)
    out += "view,eval_" + std::to_string(vm.camera) + "," + fmt(vm.offset_deg) + "," +
           fmt(vm.psnr_db) + "," + (vm.exact ? "1" : "0") + "," + fmt(vm.ssim) + ",\n";
  for (const auto& bm : report.buckets)
    out += "bucket," + bucket_label(bm.bucket) + ",," + fmt(bm.psnr_db) + "," +
           (bm.exact ? "1" : "0") + "," + fmt(bm.ssim) + ",\n";
  out += "track,epe_all,,,,," + fmt(report.epe_all) + "\n";
  if (report.has_occluded)
    out += "track,epe_occluded,,,,," + fmt(report.epe_occluded) + "\n";
  for (const auto& [name, value] : report.pck_values)
    out += "track," + name + ",,,,," + fmt(value) + "\n";
  return out;
}

std::string metric_report_json(const MetricReport& report, const std::string& config_hash) {
  json j;
  j["version"] = 1;
  j["config_hash"] = config_hash;
  json views = json::array();
  for (const auto& vm : report.views) {
    json v;
    v["camera"] = vm.camera;
    v["offset_deg"] = vm.offset_deg;
    v["bucket"] = bucket_label(vm.bucket);
    if (vm.exact)
      v["psnr_db"] = nullptr;
    else
      v["psnr_db"] = vm.psnr_db;
    v["exact"] = vm.exact;
    v["ssim"] = vm.ssim;
    views.push_back(std::move(v));
  }
  j["views"] = std::move(views);
  json buckets = json::object();
  for (const auto& bm : report.buckets) {
    json b;
    b["cameras"] = bm.cameras;
    if (bm.exact)
      b["psnr_db"] = nullptr;
    else
      b["psnr_db"] = bm.psnr_db;
    b["exact"] = bm.exact;
    b["ssim"] = bm.ssim;
    buckets[bucket_label(bm.bucket)] = std::move(b);
  }
  j["buckets"] = std::move(buckets);
  json track;
  track["epe_all"] = report.epe_all;
  if (report.has_occluded) track["epe_occluded"] = report.epe_occluded;
  for (const auto& [name, value] : report.pck_values) track[name] = value;
  j["tracking"] = std::move(track);
  return j.dump();
}

}  // namespace usplat
