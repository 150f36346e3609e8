#pragma once

#include "usplat/render.hpp"
#include "usplat/scene.hpp"

#include <string>
#include <utility>
#include <vector>

namespace usplat {

// 10 log10(1 / MSE) over all pixels and channels; +inf for identical images.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double c1 = 1e-4;  // (0.01)^2 for unit dynamic range
  double c2 = 9e-4;  // (0.03)^2
};

// Mean SSIM over channels with a Gaussian window and reflected borders.
// `grad_a`, when given, receives d(ssim)/d(a).
double ssim(const Image& a, const Image& b, const SsimOptions& opts = {},
            Image* grad_a = nullptr);

using TrackQuery = std::pair<int, int>;  // (gaussian, frame)

std::vector<TrackQuery> all_queries(const Model& model);
std::vector<TrackQuery> occluded_queries(const SyntheticScene& scene);

// Mean Euclidean position error over the queries.
double epe(const Model& model, const Model& truth, const std::vector<TrackQuery>& queries);

// Fraction of queries with position error at most the threshold.
double pck(const Model& model, const Model& truth, const std::vector<TrackQuery>& queries,
           double threshold);

struct PckThreshold {
  bool fraction_of_diagonal = false;
  double value = 0.05;
};

struct ViewMetrics {
  int camera = 0;
  double offset_deg = 0.0;
  int bucket = 0;
  double psnr_db = 0.0;
  bool exact = false;  // rendered frames matched the reference bit for bit
  double ssim = 0.0;
};

struct BucketMetrics {
  int bucket = 0;
  int cameras = 0;
  double psnr_db = 0.0;
  bool exact = false;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ViewMetrics> views;
  std::vector<BucketMetrics> buckets;
  double epe_all = 0.0;
  double epe_occluded = 0.0;
  bool has_occluded = false;
  std::vector<std::pair<std::string, double>> pck_values;
};

// Angular offsets fold to [0, 180]; buckets are (0,60], (60,120], (120,180].
int view_bucket(double offset_deg);
std::string bucket_label(int bucket);

// Renders the model and the ground truth from every held-out camera across all
// frames and aggregates image metrics per camera and per bucket.
MetricReport view_range_eval(const Model& model, const SyntheticScene& scene,
                             const RenderOptions& ropts, int threads = 1);

// view_range_eval plus trajectory metrics against the scene ground truth.
MetricReport eval_checkpoint(const Model& model, const SyntheticScene& scene,
                             const RenderOptions& ropts,
                             const std::vector<PckThreshold>& thresholds, int threads = 1);

std::string metric_report_csv(const MetricReport& report, const std::string& config_hash);
std::string metric_report_json(const MetricReport& report, const std::string& config_hash);

}  // namespace usplat
