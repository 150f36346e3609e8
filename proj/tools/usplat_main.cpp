// Pipeline driver.  Every stage is a subcommand over a shared config and
// output directory; the heavy lifting lives behind the C API.

#include <CLI11.hpp>

#include "usplat/usplat.h"

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace {

struct Common {
  std::string config_file;
  std::string out_dir;
  std::vector<std::string> sets;
  int threads = 1;
  bool force = false;
};

void add_common(CLI::App* cmd, Common* common) {
  cmd->add_option("--config", common->config_file, "Config JSON file (defaults apply)");
  cmd->add_option("-o,--out", common->out_dir,
                  "Output directory (default: $USPLAT_OUT, then ./out)");
  cmd->add_option("--set", common->sets, "Override one config value (repeatable)")
      ->type_name("KEY.PATH=VALUE");
  cmd->add_option("--threads", common->threads,
                  "Worker threads; 1 keeps outputs bit-reproducible");
  cmd->add_flag("--force", common->force, "Evaluate across mixed config stamps");
}

struct HandleDeleter {
  void operator()(usplat_pipeline* p) const { usplat_destroy(p); }
};
using Handle = std::unique_ptr<usplat_pipeline, HandleDeleter>;

int fail(usplat_pipeline* p, usplat_status status) {
  std::fprintf(stderr, "%s\n", usplat_last_error(p));
  return static_cast<int>(status);
}

int run(const Common& common, bool drift, const char* stage_name,
        const std::function<usplat_status(usplat_pipeline*)>& stage) {
  Handle handle(usplat_create());
  if (!handle) {
    std::fprintf(stderr, "{\"error\":{\"status\":6,\"kind\":\"internal\","
                         "\"message\":\"allocation failed\"}}\n");
    return static_cast<int>(USPLAT_ERROR_INTERNAL);
  }
  usplat_pipeline* p = handle.get();

  std::string out = common.out_dir;
  if (out.empty()) {
    const char* env = std::getenv("USPLAT_OUT");
    out = env && env[0] ? env : "out";
  }

  // Config precedence: --config, then the config a previous stage left in the
  // output directory, then defaults.  Overrides apply on top.
  std::string config_file = common.config_file;
  if (config_file.empty()) {
    const std::string resumed = out + "/config.json";
    if (std::FILE* f = std::fopen(resumed.c_str(), "rb")) {
      std::fclose(f);
      config_file = resumed;
    }
  }
  if (!config_file.empty()) {
    const usplat_status s = usplat_load_config_file(p, config_file.c_str());
    if (s != USPLAT_OK) return fail(p, s);
  }
  if (drift) {
    const usplat_status s = usplat_set_option(p, "pretrain.mode", "drift");
    if (s != USPLAT_OK) return fail(p, s);
  }
  for (const std::string& kv : common.sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "{\"error\":{\"status\":1,\"kind\":\"config\","
                           "\"message\":\"--set expects KEY.PATH=VALUE\"}}\n");
      return static_cast<int>(USPLAT_ERROR_CONFIG);
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    const usplat_status s = usplat_set_option(p, key.c_str(), value.c_str());
    if (s != USPLAT_OK) return fail(p, s);
  }

  usplat_status s = usplat_set_output_dir(p, out.c_str());
  if (s != USPLAT_OK) return fail(p, s);
  s = usplat_set_threads(p, common.threads);
  if (s != USPLAT_OK) return fail(p, s);
  s = usplat_set_force(p, common.force ? 1 : 0);
  if (s != USPLAT_OK) return fail(p, s);

  s = stage(p);
  if (s != USPLAT_OK) return fail(p, s);

  if (stage_name) {
    char hash[17] = {0};
    if (usplat_config_hash(p, hash, sizeof(hash)) == USPLAT_OK)
      std::printf("ok %s (config %s, out %s)\n", stage_name, hash, out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-aware dynamic Gaussian splatting pipeline"};
  app.require_subcommand(1);

  Common common;
  bool drift = false;
  std::string source = "checkpoint";
  std::string cameras = "eval";
  std::string frames = "all";
  std::string name;

  CLI::App* cmd_gen =
      app.add_subcommand("gen", "Generate the scene and ground-truth input frames");
  CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "Build the pretrained snapshot");
  cmd_pretrain->add_flag("--drift", drift,
                         "Simulate a drifted snapshot instead of optimizing");
  CLI::App* cmd_uncert =
      app.add_subcommand("uncert", "Estimate per-Gaussian per-frame uncertainty");
  CLI::App* cmd_graph = app.add_subcommand("graph", "Build the motion graph");
  CLI::App* cmd_optimize =
      app.add_subcommand("optimize", "Optimize the model from the snapshot");
  CLI::App* cmd_render = app.add_subcommand("render", "Render frames from a model");
  cmd_render->add_option("--source", source, "checkpoint | snapshot | truth");
  cmd_render->add_option("--cameras", cameras, "input | eval");
  cmd_render->add_option("--frames", frames, "all, one index, or a-b");
  cmd_render->add_option("--name", name, "Subdirectory under renders/");
  CLI::App* cmd_eval = app.add_subcommand("eval", "Evaluate the checkpoint");
  CLI::App* cmd_selftest = app.add_subcommand("selftest", "Run the built-in oracle checks");

  for (CLI::App* cmd : {cmd_gen, cmd_pretrain, cmd_uncert, cmd_graph, cmd_optimize,
                        cmd_render, cmd_eval, cmd_selftest})
    add_common(cmd, &common);

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(cmd_gen)) return run(common, false, "gen", usplat_run_gen);
  if (app.got_subcommand(cmd_pretrain))
    return run(common, drift, "pretrain", usplat_run_pretrain);
  if (app.got_subcommand(cmd_uncert)) return run(common, false, "uncert", usplat_run_uncert);
  if (app.got_subcommand(cmd_graph)) return run(common, false, "graph", usplat_run_graph);
  if (app.got_subcommand(cmd_optimize))
    return run(common, false, "optimize", usplat_run_optimize);
  if (app.got_subcommand(cmd_render))
    return run(common, false, "render", [&](usplat_pipeline* p) {
      return usplat_run_render(p, source.c_str(), cameras.c_str(), frames.c_str(),
                               name.c_str());
    });
  if (app.got_subcommand(cmd_eval)) return run(common, false, "eval", usplat_run_eval);
  if (app.got_subcommand(cmd_selftest)) {
    int failures = -1;
    const int rc = run(common, false, nullptr, [&](usplat_pipeline* p) {
      return usplat_run_selftest(p, &failures);
    });
    if (rc != 0) return rc;
    return failures == 0 ? 0 : 1;
  }
  return 0;
}
