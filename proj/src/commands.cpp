#include "udfforge/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "udfforge/checkpoint.hpp"
#include "udfforge/error.hpp"
#include "udfforge/geometry.hpp"
#include "udfforge/parallel.hpp"
#include "udfforge/scene.hpp"
#include "udfforge/surfel.hpp"

namespace udf {

namespace fs = std::filesystem;

namespace {

using ojson = nlohmann::ordered_json;

void require_input(const std::string& path, const char* key) {
  if (path.empty()) fail(ErrorCode::Config, std::string("paths.") + key + " is not set");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    fail(ErrorCode::Config, std::string("paths.") + key + ": cannot read '" + path + "'");
  }
}

void require_output_dir(const std::string& dir) {
  if (dir.empty()) fail(ErrorCode::Config, "paths.out_dir is not set");
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec)) {
    fail(ErrorCode::Config, "paths.out_dir: '" + dir + "' exists and is not a directory");
  }
}

fs::path prepare_output(const RunConfig& config) {
  const fs::path dir(config.paths.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create output directory '" + dir.string() + "': " + ec.message());
  set_max_threads(config.threads);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) fail(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

void echo_config(const fs::path& dir, const RunConfig& config) {
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");
}

// A field expressed in another frame: value(p) = scale * inner(invert(p)).
class TransformedField final : public Field {
 public:
  TransformedField(const Field& inner, SceneTransform t) : inner_(inner.clone()), t_(t) {}

  double eval(const Vec3& p) const override { return t_.scale * inner_->eval(t_.invert(p)); }
  FieldGradient eval_with_grad(const Vec3& p) const override {
    FieldGradient g = inner_->eval_with_grad(t_.invert(p));
    g.value *= t_.scale;
    return g;
  }
  double kink_margin(const Vec3& p) const override { return t_.scale * inner_->kink_margin(t_.invert(p)); }
  std::unique_ptr<Field> clone() const override { return std::make_unique<TransformedField>(*inner_, t_); }

 private:
  std::unique_ptr<Field> inner_;
  SceneTransform t_;
};

FieldFile load_checkpoint(const RunConfig& config) {
  require_input(config.paths.checkpoint, "checkpoint");
  return load_field_file(config.paths.checkpoint);
}

double iso_band(const RunConfig& config) {
  const Resolution res = Resolution::cubic(config.grid.resolution);
  return config.grid.iso_band ? *config.grid.iso_band : default_iso_band(config.grid.bbox, res);
}

ojson stats_json(const ExtractionStats& s) {
  return {{"crossing_edges", s.crossing_edges},
          {"active_cubes", s.active_cubes},
          {"inconsistent_cubes", s.inconsistent_cubes},
          {"degenerate_triangles", s.degenerate_triangles}};
}

std::string step_name(int step, int steps) {
  const int width = std::max(3, static_cast<int>(std::to_string(steps).size()));
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%0*d.xyz", width, step);
  return buf;
}

std::string checkpoint_stem(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08lld", static_cast<long long>(iteration));
  return buf;
}

}  // namespace

void run_synth(const RunConfig& config) {
  config.validate();
  require_output_dir(config.paths.out_dir);
  const SceneKind kind = scene_kind_from_string(config.synth.kind);
  const SyntheticScene scene = gen_scene(kind, config.synth.n, config.synth.noise, config.seed, config.synth.scene);
  const fs::path dir = prepare_output(config);
  save_cloud(scene.cloud, (dir / "cloud.surfels").string(), CloudFormat::Text);
  save_points(scene.gt_samples, (dir / "gt.xyz").string());
  save_field_file((dir / "oracle.udf").string(), scene.oracle);
  echo_config(dir, config);
}

TrainSummary run_train(const RunConfig& config, const std::string& resume,
                       const std::function<void(const MetricRecord&)>& on_record) {
  config.validate();
  require_input(config.paths.cloud, "cloud");
  require_output_dir(config.paths.out_dir);
  std::optional<ResumeState> resume_state;
  SurfelCloud cloud = normalize_cloud(load_cloud(config.paths.cloud, false));
  if (!resume.empty()) {
    std::error_code ec;
    if (!fs::is_regular_file(resume, ec)) fail(ErrorCode::Config, "resume: cannot read '" + resume + "'");
    FieldFile file = load_field_file(resume);
    auto* neural = dynamic_cast<NeuralField*>(file.field.get());
    if (!neural) fail(ErrorCode::Config, "resume: '" + resume + "' does not hold a neural field");
    if (!(neural->arch() == config.train.arch)) {
      fail(ErrorCode::Config, "resume: checkpoint architecture differs from the configured one");
    }
    if (file.transform.scale != cloud.transform.scale || file.transform.translation != cloud.transform.translation) {
      fail(ErrorCode::Config, "resume: checkpoint was trained on a different cloud");
    }
    resume_state = ResumeState{*neural, file.optimizer, file.iteration, cloud};
    // Checkpointed centers are stored in the normalized frame.
    const fs::path sibling = fs::path(resume).replace_extension(".surfels");
    if (fs::is_regular_file(sibling, ec)) {
      SurfelCloud projected = load_cloud(sibling.string(), false);
      if (projected.size() != cloud.size()) {
        fail(ErrorCode::Config, "resume: '" + sibling.string() + "' does not match the input cloud");
      }
      projected.transform = cloud.transform;
      cloud = std::move(projected);
    }
  }

  const fs::path dir = prepare_output(config);
  echo_config(dir, config);

  std::ofstream log(dir / "metrics.ndjson", std::ios::binary);
  if (!log) fail(ErrorCode::Io, "cannot open metrics log in '" + dir.string() + "'");
  TrainHooks hooks;
  hooks.on_record = [&](const MetricRecord& r) {
    log << to_json(r).dump() << '\n';
    if (on_record) on_record(r);
  };
  hooks.on_checkpoint = [&](const TrainState& state) {
    const fs::path ckpt_dir = dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    const std::string stem = checkpoint_stem(state.iteration);
    save_field_file((ckpt_dir / (stem + ".udf")).string(), state.field, state.cloud.transform, state.iteration,
                    &state.optimizer);
    save_cloud(state.cloud, (ckpt_dir / (stem + ".surfels")).string(), CloudFormat::Text);
    log.flush();
  };

  const TrainResult result = train(cloud, config.train, hooks, resume_state ? &*resume_state : nullptr);
  log.flush();
  if (!log) fail(ErrorCode::Io, "failed writing the metrics log");
  save_field_file((dir / "field.udf").string(), result.field, result.cloud.transform, result.iteration,
                  &result.optimizer);
  save_cloud(result.cloud, (dir / "cloud.surfels").string(), CloudFormat::Text);

  TrainSummary summary;
  summary.iterations = result.iteration;
  if (!result.log.empty()) summary.last = result.log.back();
  summary.aborted = result.aborted;
  summary.abort_reason = result.abort_reason;
  if (result.aborted) fail(ErrorCode::Runtime, "training aborted: " + result.abort_reason);
  return summary;
}

ExtractionStats run_extract(const RunConfig& config) {
  config.validate();
  require_output_dir(config.paths.out_dir);
  const FieldFile file = load_checkpoint(config);
  const Resolution res = Resolution::cubic(config.grid.resolution);
  ExtractedMesh extracted = extract_mesh(*file.field, config.grid.bbox, res, iso_band(config));
  for (auto& v : extracted.mesh.vertices) v = file.transform.invert(v);
  const auto loops = mesh_boundary_loops(extracted.mesh);

  const fs::path dir = prepare_output(config);
  save_obj(extracted.mesh, (dir / "mesh.obj").string());
  save_boundary_obj(extracted.mesh, loops, (dir / "boundary.obj").string());
  ojson info;
  info["vertices"] = extracted.mesh.vertices.size();
  info["triangles"] = extracted.mesh.triangles.size();
  info["boundary_edges"] = extracted.mesh.boundary_edges.size();
  info["boundary_loops"] = loops.size();
  info["iso_band"] = iso_band(config);
  info["stats"] = stats_json(extracted.stats);
  info["diagnostic"] = extracted.diagnostic;
  write_text(dir / "mesh.json", info.dump(2) + "\n");
  echo_config(dir, config);
  if (extracted.mesh.triangles.empty()) fail(ErrorCode::Runtime, "extract: " + extracted.diagnostic);
  return extracted.stats;
}

DeformationTrace run_deform(const RunConfig& config) {
  config.validate();
  require_output_dir(config.paths.out_dir);
  const FieldFile file = load_checkpoint(config);
  PointSet start;
  if (!config.paths.points.empty()) {
    require_input(config.paths.points, "points");
    for (const auto& p : load_points(config.paths.points)) start.push_back(file.transform.apply(p));
  } else {
    Rng rng(config.seed);
    start.resize(config.deform.points);
    for (auto& p : start) p = rng.uniform_in(config.grid.bbox);
  }
  if (start.empty()) fail(ErrorCode::InvalidArgument, "deform: no input points");
  const DeformationTrace trace = deform_cloud(*file.field, start, config.deform.steps, config.deform.step_fraction,
                                              config.train.grad_eps);

  const fs::path dir = prepare_output(config);
  ojson info;
  info["steps"] = config.deform.steps;
  info["step_fraction"] = config.deform.step_fraction;
  info["points"] = start.size();
  info["mean_residual"] = trace.mean_residual;
  ojson files = ojson::array();
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    PointSet raw;
    raw.reserve(trace.steps[s].size());
    for (const auto& p : trace.steps[s]) raw.push_back(file.transform.invert(p));
    const std::string name = step_name(static_cast<int>(s), config.deform.steps);
    save_points(raw, (dir / name).string());
    files.push_back(name);
  }
  info["files"] = files;
  write_text(dir / "deform.json", info.dump(2) + "\n");
  echo_config(dir, config);
  return trace;
}

EvalReport run_eval(const RunConfig& config) {
  config.validate();
  require_output_dir(config.paths.out_dir);
  const FieldFile file = load_checkpoint(config);
  if (!config.paths.gt.empty()) require_input(config.paths.gt, "gt");
  if (!config.paths.oracle.empty()) require_input(config.paths.oracle, "oracle");
  set_max_threads(config.threads);
  const Field& field = *file.field;

  EvalReport report;
  report.band = config.eval.band;
  report.chamfer_mode = config.eval.chamfer_mode;
  Rng rng(config.seed);

  if (!config.paths.gt.empty()) {
    PointSet gt;
    for (const auto& p : load_points(config.paths.gt)) gt.push_back(file.transform.apply(p));
    const SurfacePoints surface = collect_surface_points(field, config.eval.surface_points,
                                                         config.eval.residual_threshold, rng, config.grid.bbox);
    report.surface_points = surface.points.size();
    if (!surface.points.empty() && !gt.empty()) {
      report.chamfer = chamfer(surface.points, gt, chamfer_mode_from_string(config.eval.chamfer_mode));
    }
  }
  if (!config.paths.oracle.empty()) {
    const FieldFile oracle = load_field_file(config.paths.oracle);
    const TransformedField oracle_here(*oracle.field, file.transform);
    const UdfError err = udf_error(field, oracle_here, config.grid.bbox, Resolution::cubic(config.eval.resolution),
                                   config.eval.band);
    report.udf_mae_band = err.mae;
    report.udf_max_band = err.max;
  }
  if (config.eval.grad_check_points > 0) {
    report.grad_check_max_rel_err = grad_check(field, config.eval.grad_check_points, rng, config.grid.bbox).max_rel_err;
  }
  if (config.eval.mesh_resolution > 0) {
    const Resolution res = Resolution::cubic(config.eval.mesh_resolution);
    const ExtractedMesh m = extract_mesh(field, config.grid.bbox, res, default_iso_band(config.grid.bbox, res));
    report.boundary_loop_count = mesh_boundary_loops(m.mesh).size();
  }
  report.config = to_json(config);

  const fs::path dir = prepare_output(config);
  write_text(dir / "report.json", to_json(report).dump(2) + "\n");
  echo_config(dir, config);
  return report;
}

void run_export_field(const RunConfig& config) {
  config.validate();
  require_output_dir(config.paths.out_dir);
  const FieldFile file = load_checkpoint(config);
  set_max_threads(config.threads);
  const Grid grid = eval_grid(*file.field, config.grid.bbox, Resolution::cubic(config.grid.resolution));
  const fs::path dir = prepare_output(config);
  save_grid(grid, (dir / "field.f32").string(), (dir / "field.json").string());
  echo_config(dir, config);
}

}  // namespace udf
