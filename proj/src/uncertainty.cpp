#include "usplat/uncertainty.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace usplat {

using nlohmann::json;

std::optional<double> scalar_variance(const std::vector<double>& weights) {
  if (weights.empty()) return std::nullopt;
  double s = 0.0;
  for (double v : weights) s += v * v;
  if (s <= 0.0) return std::nullopt;
  return 1.0 / s;
}

std::vector<uint8_t> pixel_convergence(const Image& rendered, const Image& truth,
                                       double eta_c) {
  if (!rendered.same_shape(truth)) throw ShapeError("convergence images differ in shape");
  std::vector<uint8_t> out(rendered.pixels());
  for (int pix = 0; pix < rendered.pixels(); ++pix) {
    double l1 = 0.0;
    for (int c = 0; c < 3; ++c)
      l1 += std::abs(rendered.data[3 * pix + c] - truth.data[3 * pix + c]);
    out[pix] = l1 < eta_c ? 1 : 0;
  }
  return out;
}

std::vector<uint8_t> gaussian_indicator(const WeightRecord& record,
                                        const std::vector<uint8_t>& convergence,
                                        const UncertaintyParams& params) {
  std::vector<uint8_t> out(record.per_gaussian.size(), 0);
  for (size_t i = 0; i < record.per_gaussian.size(); ++i) {
    const auto& pixels = record.per_gaussian[i];
    if (pixels.empty()) continue;
    int good = 0;
    for (const auto& pw : pixels) good += convergence[pw.pixel] ? 1 : 0;
    if (params.fractional_indicator)
      out[i] = good >= params.indicator_fraction * pixels.size() ? 1 : 0;
    else
      out[i] = good == static_cast<int>(pixels.size()) ? 1 : 0;
  }
  return out;
}

double scalar_uncertainty(std::optional<double> variance, bool converged, double phi) {
  if (!converged || !variance) return phi;
  return *variance;
}

Mat3 anisotropic_uncertainty(double u, const Camera& cam, const Vec3& r) {
  return cam.R_wc * (r * u).asDiagonal() * cam.R_wc.transpose();
}

Mat3 inverse_uncertainty(double u, const Camera& cam, const Vec3& r) {
  const Vec3 d(1.0 / (r[0] * u), 1.0 / (r[1] * u), 1.0 / (r[2] * u));
  return cam.R_wc * d.asDiagonal() * cam.R_wc.transpose();
}

UncertaintyField estimate_field(const Model& model, const std::vector<Camera>& input_cameras,
                                const std::vector<Image>& truth, const RenderOptions& ropts,
                                const UncertaintyParams& params,
                                const std::vector<std::vector<uint8_t>>* visibility,
                                int threads) {
  const int frames = model_frames(model);
  const int n = static_cast<int>(model.size());
  if (static_cast<int>(input_cameras.size()) != frames)
    throw ShapeError("camera count does not match model frame count");
  if (static_cast<int>(truth.size()) != frames)
    throw ShapeError("reference image count does not match model frame count");

  UncertaintyField field;
  field.gaussian_count = n;
  field.frame_count = frames;
  field.params = params;
  field.u.assign(static_cast<size_t>(n) * frames, params.phi);
  field.converged.assign(static_cast<size_t>(n) * frames, 0);

  parallel_for(frames, threads, [&](int begin, int end) {
    for (int t = begin; t < end; ++t) {
      const auto states = states_at(model, t);
      const FrameRender fr = render_frame(states, input_cameras[t], ropts,
                                          visibility ? &(*visibility)[t] : nullptr);
      const auto conv = pixel_convergence(fr.image, truth[t], params.eta_c);
      const auto indicator = gaussian_indicator(fr.record, conv, params);
      for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (const auto& pw : fr.record.per_gaussian[i]) sq += pw.weight * pw.weight;
        // No coverage and variances at or above phi both count as unconverged,
        // keeping phi an exact ceiling.
        std::optional<double> var;
        if (sq >= 1.0 / params.phi) var = 1.0 / sq;
        const bool ok = indicator[i] && var.has_value();
        field.converged[static_cast<size_t>(i) * frames + t] = ok ? 1 : 0;
        field.u[static_cast<size_t>(i) * frames + t] =
            scalar_uncertainty(var, ok, params.phi);
      }
    }
  });
  return field;
}

std::string serialize_field(const UncertaintyField& field, const std::string& config_hash) {
  json j;
  j["version"] = 1;
  j["config_hash"] = config_hash;
  j["N_g"] = field.gaussian_count;
  j["T"] = field.frame_count;
  j["u"] = field.u;
  j["I"] = field.converged;
  j["r"] = {field.params.r[0], field.params.r[1], field.params.r[2]};
  j["eta_c"] = field.params.eta_c;
  j["phi"] = field.params.phi;
  j["fractional_indicator"] = field.params.fractional_indicator;
  j["indicator_fraction"] = field.params.indicator_fraction;
  return j.dump();
}

UncertaintyField deserialize_field(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("field parse error: ") + e.what());
  }
  UncertaintyField field;
  field.gaussian_count = j.at("N_g").get<int>();
  field.frame_count = j.at("T").get<int>();
  field.u = j.at("u").get<std::vector<double>>();
  field.converged = j.at("I").get<std::vector<uint8_t>>();
  const auto r = j.at("r").get<std::vector<double>>();
  if (r.size() != 3) throw IoError("field r must have 3 entries");
  field.params.r = Vec3(r[0], r[1], r[2]);
  field.params.eta_c = j.at("eta_c").get<double>();
  field.params.phi = j.at("phi").get<double>();
  field.params.fractional_indicator = j.value("fractional_indicator", false);
  field.params.indicator_fraction = j.value("indicator_fraction", 0.9);
  const size_t expected =
      static_cast<size_t>(field.gaussian_count) * field.frame_count;
  if (field.u.size() != expected || field.converged.size() != expected)
    throw IoError("field array sizes do not match N_g * T");
  return field;
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

void save_field(const UncertaintyField& field, const std::string& path,
                const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << serialize_field(field, config_hash);
  if (!out) throw IoError("failed writing '" + path + "'");
}

UncertaintyField load_field(const std::string& path) {
  return deserialize_field(read_file_or_throw(path));
}

}  // namespace usplat
