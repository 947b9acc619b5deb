#pragma once

#include <functional>
#include <optional>
#include <string>

#include "udfforge/config.hpp"
#include "udfforge/geometry.hpp"
#include "udfforge/metrics.hpp"
#include "udfforge/training.hpp"

namespace udf {

// One function per CLI subcommand. Each validates its inputs before creating
// any output, writes into config.paths.out_dir and echoes the effective
// config there as config.json. Missing inputs raise Error(Config).

/// cloud.surfels, gt.xyz and oracle.udf for a synthetic scene.
void run_synth(const RunConfig& config);

struct TrainSummary {
  std::int64_t iterations = 0;
  std::optional<MetricRecord> last;
  bool aborted = false;
  std::string abort_reason;
};

/// field.udf (with optimizer state), cloud.surfels with the projected
/// centers, metrics.ndjson and periodic checkpoints/ckpt_<iter>.{udf,surfels}.
/// `resume` names a field file written by an earlier run; a sibling .surfels
/// file, when present, replaces the input cloud. Aborted runs keep their
/// outputs and then raise Error(Runtime).
TrainSummary run_train(const RunConfig& config, const std::string& resume = {},
                       const std::function<void(const MetricRecord&)>& on_record = {});

/// mesh.obj, boundary.obj and mesh.json.
ExtractionStats run_extract(const RunConfig& config);

/// step_<k>.xyz for every step and deform.json with the mean residuals.
DeformationTrace run_deform(const RunConfig& config);

/// report.json. The report is also returned.
EvalReport run_eval(const RunConfig& config);

/// field.f32 and field.json.
void run_export_field(const RunConfig& config);

}  // namespace udf
