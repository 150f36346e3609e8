#pragma once

#include "usplat/config.hpp"

#include <iosfwd>
#include <string>

namespace usplat {

struct PipelineOptions {
  std::string out_dir;
  int threads = 1;
  bool force = false;  // proceed past mixed config stamps at evaluation
};

// Stage driver over an output directory.  Each stage reads its inputs back
// from disk, so stages can run in separate processes and in any order that
// respects the dependencies; a missing input names the stage that produces it.
// With one thread, re-running a stage on unchanged inputs rewrites the same
// bytes.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, PipelineOptions options);

  const PipelineConfig& config() const { return config_; }
  const std::string& hash() const { return hash_; }
  const PipelineOptions& options() const { return options_; }

  // Scene plus ground-truth input frames under the occlusion masks.
  void run_gen();
  // Snapshot from vanilla optimization or the simulated-drift initializer.
  void run_pretrain();
  void run_uncert();
  void run_graph();
  void run_optimize();
  // source: "checkpoint", "snapshot", or "truth".  cameras: "input" or
  // "eval".  frames: "all", one index, or an inclusive "a-b" range.  Frames
  // land in renders/<out_subdir>/; no occlusion masks are applied.
  void run_render(const std::string& source, const std::string& cameras,
                  const std::string& frames, const std::string& out_subdir);
  void run_eval();

 private:
  std::string path(const std::string& name) const;
  std::string require_artifact(const std::string& name, const std::string& stage,
                               const std::string& producer) const;
  SyntheticScene load_scene_artifact(const std::string& stage) const;
  std::vector<Image> load_gt_images(int frame_count, const std::string& stage) const;
  Model load_snapshot(const std::string& stage) const;
  void write_config() const;

  PipelineConfig config_;
  PipelineOptions options_;
  std::string hash_;
};

// Inline oracle suite (blend-variance Monte Carlo, gradient checks, dual
// quaternion identities).  Prints one line per check; returns how many failed.
int run_selftest(std::ostream& out);

}  // namespace usplat
