#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "udfforge/scene.hpp"
#include "udfforge/training.hpp"
#include "udfforge/types.hpp"

namespace udf {

struct PathsConfig {
  std::string cloud;       // input surfel cloud (train)
  std::string checkpoint;  // input field file (extract, deform, eval, export-field)
  std::string points;      // input xyz points (deform); empty samples the box
  std::string gt;          // ground-truth surface samples (eval)
  std::string oracle;      // analytic oracle field file (eval)
  std::string out_dir;     // output directory of every command
};

struct GridConfig {
  BBox bbox;
  int resolution = 64;
  std::optional<double> iso_band;  // default: two cell diagonals
};

struct DeformConfig {
  int steps = 20;
  double step_fraction = 0.5;
  std::size_t points = 10000;  // random box points when paths.points is empty
};

struct EvalConfig {
  double band = 0.3;
  int resolution = 48;
  std::string chamfer_mode = "euclidean";
  std::size_t surface_points = 10000;
  double residual_threshold = 0.01;
  std::size_t grad_check_points = 100;
  int mesh_resolution = 64;  // 0 skips the boundary loop count
};

struct SynthConfig {
  std::string kind = "disk";
  std::size_t n = 2000;
  double noise = 0.0;
  SceneOptions scene;
};

/// Everything any subcommand reads. Serialized as JSON with a version key.
struct RunConfig {
  int version = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  PathsConfig paths;
  TrainConfig train;  // includes arch and sampler
  GridConfig grid;
  DeformConfig deform;
  EvalConfig eval;
  SynthConfig synth;

  /// Range checks on every group. Throws Error(Config).
  void validate() const;
};

/// Parses a JSON config on top of the defaults. Unknown keys, wrong types and
/// out-of-range values raise Error(Config) naming `source` and the line.
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

/// Applies `value` (JSON text, or a bare string) at a dotted key such as
/// "train.total_iters" with the same checks as the file parser.
void apply_override(RunConfig& config, const std::string& dotted_key, const std::string& value);

nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace udf
