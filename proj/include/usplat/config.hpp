#pragma once

#include "usplat/graph.hpp"
#include "usplat/losses.hpp"
#include "usplat/optim.hpp"
#include "usplat/render.hpp"
#include "usplat/scene.hpp"
#include "usplat/uncertainty.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace usplat {

struct EvalConfig {
  // Track thresholds as fractions of the ground-truth bounding-box diagonal.
  std::vector<double> pck_fractions = {0.05};
  // Absolute world-unit thresholds.
  std::vector<double> pck_absolute = {0.05, 0.1};
};

// Everything a run needs, grouped by stage.  The scene seed is not configured
// directly: it is derived from the root seed when the scene is generated, as
// are the per-stage seeds.
struct PipelineConfig {
  uint64_t seed = 1;
  SceneConfig scene;
  RenderOptions render;
  UncertaintyParams uncertainty;
  GraphParams graph;
  LossWeights loss;
  PretrainConfig pretrain;
  OptimizeConfig optimize;
  EvalConfig eval;

  void validate() const;
};

// Parse a config document.  Missing keys take their defaults; unknown keys
// anywhere in the tree are an error, reported with their dotted path.
PipelineConfig parse_config(const std::string& json_text);

// Canonical serialization: every key present, keys sorted.  Two configs with
// equal canonical forms behave identically.
std::string serialize_config(const PipelineConfig& config);

// FNV-1a hash of the canonical form, as 16 hex digits.  Stamped into every
// artifact a run writes; evaluation refuses inputs whose stamps disagree.
std::string config_hash(const PipelineConfig& config);

// Set one value in a config document by dotted path ("optimize.iterations").
// The path must name a key that exists in the canonical form.  The value text
// is parsed as JSON when possible and taken as a string otherwise.  Returns
// the updated document.
std::string apply_override(const std::string& json_text, const std::string& path,
                           const std::string& value);

}  // namespace usplat
