#include "usplat/usplat.h"

#include "usplat/pipeline.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <iostream>
#include <new>
#include <sstream>

using nlohmann::json;

struct usplat_pipeline {
  std::string config_json;
  usplat::PipelineOptions options;
  std::string last_error;
};

namespace {

struct ErrorInfo {
  usplat_status status;
  const char* kind;
};

ErrorInfo classify(const std::exception& e) {
  if (dynamic_cast<const usplat::ConfigError*>(&e)) return {USPLAT_ERROR_CONFIG, "config"};
  if (dynamic_cast<const usplat::IoError*>(&e)) return {USPLAT_ERROR_IO, "io"};
  if (dynamic_cast<const usplat::DependencyError*>(&e))
    return {USPLAT_ERROR_DEPENDENCY, "dependency"};
  if (dynamic_cast<const usplat::ShapeError*>(&e)) return {USPLAT_ERROR_SHAPE, "shape"};
  if (dynamic_cast<const usplat::NumericError*>(&e)) return {USPLAT_ERROR_NUMERIC, "numeric"};
  return {USPLAT_ERROR_INTERNAL, "internal"};
}

// Runs fn, mapping exceptions onto statuses and the stored error line.
template <typename Fn>
usplat_status guarded(usplat_pipeline* p, Fn&& fn) {
  if (!p) return USPLAT_ERROR_INTERNAL;
  p->last_error.clear();
  try {
    fn();
    return USPLAT_OK;
  } catch (const std::exception& e) {
    const ErrorInfo info = classify(e);
    json j;
    j["error"] = {{"status", static_cast<int>(info.status)},
                  {"kind", info.kind},
                  {"message", e.what()}};
    p->last_error = j.dump();
    return info.status;
  }
}

usplat::Pipeline make_pipeline(const usplat_pipeline* p) {
  return usplat::Pipeline(usplat::parse_config(p->config_json), p->options);
}

std::string require_text(const char* text, const char* what) {
  if (!text) throw usplat::ConfigError(std::string(what) + " must not be NULL");
  return text;
}

}  // namespace

extern "C" {

usplat_pipeline* usplat_create(void) {
  usplat_pipeline* p = new (std::nothrow) usplat_pipeline;
  if (!p) return nullptr;
  p->config_json = usplat::serialize_config(usplat::PipelineConfig{});
  return p;
}

void usplat_destroy(usplat_pipeline* pipeline) { delete pipeline; }

usplat_status usplat_load_config_file(usplat_pipeline* pipeline, const char* path) {
  return guarded(pipeline, [&] {
    const std::string file = require_text(path, "config path");
    std::ifstream f(file, std::ios::binary);
    if (!f) throw usplat::IoError("cannot open " + file);
    std::ostringstream ss;
    ss << f.rdbuf();
    const usplat::PipelineConfig config = usplat::parse_config(ss.str());
    pipeline->config_json = usplat::serialize_config(config);
  });
}

usplat_status usplat_load_config_json(usplat_pipeline* pipeline, const char* json_text) {
  return guarded(pipeline, [&] {
    const usplat::PipelineConfig config =
        usplat::parse_config(require_text(json_text, "config document"));
    pipeline->config_json = usplat::serialize_config(config);
  });
}

usplat_status usplat_set_option(usplat_pipeline* pipeline, const char* path,
                                const char* value) {
  return guarded(pipeline, [&] {
    pipeline->config_json = usplat::apply_override(
        pipeline->config_json, require_text(path, "option path"),
        require_text(value, "option value"));
  });
}

usplat_status usplat_set_output_dir(usplat_pipeline* pipeline, const char* dir) {
  return guarded(pipeline,
                 [&] { pipeline->options.out_dir = require_text(dir, "output directory"); });
}

usplat_status usplat_set_threads(usplat_pipeline* pipeline, int threads) {
  return guarded(pipeline, [&] {
    if (threads < 1) throw usplat::ConfigError("thread count must be at least 1");
    pipeline->options.threads = threads;
  });
}

usplat_status usplat_set_force(usplat_pipeline* pipeline, int force) {
  return guarded(pipeline, [&] { pipeline->options.force = force != 0; });
}

usplat_status usplat_config_hash(usplat_pipeline* pipeline, char* out, size_t out_size) {
  return guarded(pipeline, [&] {
    if (!out || out_size < 17)
      throw usplat::ConfigError("hash buffer must hold at least 17 bytes");
    const std::string h = usplat::config_hash(usplat::parse_config(pipeline->config_json));
    std::memcpy(out, h.c_str(), h.size() + 1);
  });
}

const char* usplat_last_error(const usplat_pipeline* pipeline) {
  return pipeline ? pipeline->last_error.c_str() : "";
}

usplat_status usplat_run_gen(usplat_pipeline* pipeline) {
  return guarded(pipeline, [&] { make_pipeline(pipeline).run_gen(); });
}

usplat_status usplat_run_pretrain(usplat_pipeline* pipeline) {
  return guarded(pipeline, [&] { make_pipeline(pipeline).run_pretrain(); });
}

usplat_status usplat_run_uncert(usplat_pipeline* pipeline) {
  return guarded(pipeline, [&] { make_pipeline(pipeline).run_uncert(); });
}

usplat_status usplat_run_graph(usplat_pipeline* pipeline) {
  return guarded(pipeline, [&] { make_pipeline(pipeline).run_graph(); });
}

usplat_status usplat_run_optimize(usplat_pipeline* pipeline) {
  return guarded(pipeline, [&] { make_pipeline(pipeline).run_optimize(); });
}

usplat_status usplat_run_render(usplat_pipeline* pipeline, const char* source,
                                const char* cameras, const char* frames,
                                const char* out_subdir) {
  return guarded(pipeline, [&] {
    make_pipeline(pipeline).run_render(require_text(source, "render source"),
                                       require_text(cameras, "camera set"),
                                       frames ? frames : "", out_subdir ? out_subdir : "");
  });
}

usplat_status usplat_run_eval(usplat_pipeline* pipeline) {
  return guarded(pipeline, [&] { make_pipeline(pipeline).run_eval(); });
}

usplat_status usplat_run_selftest(usplat_pipeline* pipeline, int* failures_out) {
  return guarded(pipeline, [&] {
    const int failures = usplat::run_selftest(std::cout);
    if (failures_out) *failures_out = failures;
  });
}

}  // extern "C"
