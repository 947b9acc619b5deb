#include "udfforge/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "udfforge/error.hpp"
#include "udfforge/metrics.hpp"

namespace udf {

namespace {

using ojson = nlohmann::ordered_json;

ojson vec_json(const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); }

// 1-based line of the last path component, found by scanning for each quoted
// key in turn. Returns 0 when the text does not contain the path.
int line_of(const std::string& text, const std::vector<std::string>& path) {
  if (text.empty()) return 0;
  std::size_t pos = 0;
  for (const auto& key : path) {
    const std::size_t found = text.find('"' + key + '"', pos);
    if (found == std::string::npos) return 0;
    pos = found + 1;
  }
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

std::string dotted(const std::vector<std::string>& path) {
  std::string out;
  for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
  return out;
}

struct Context {
  const std::string& text;
  const std::string& source;

  [[noreturn]] void error(const std::vector<std::string>& path, const std::string& message) const {
    const int line = line_of(text, path);
    std::string where = source;
    if (line > 0) where += ":" + std::to_string(line);
    fail(ErrorCode::Config, where + ": " + (path.empty() ? "" : "'" + dotted(path) + "': ") + message);
  }
};

const char* type_name(const ojson& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

// Keys whose default is null but which accept a number.
bool nullable_number(const std::vector<std::string>& path) {
  return dotted(path) == "grid.iso_band";
}

// Overlays `user` onto `base`, which holds every known key with a value of
// the expected type.
void merge(ojson& base, const ojson& user, std::vector<std::string>& path, const Context& ctx) {
  if (!user.is_object()) ctx.error(path, std::string("expected an object, got ") + type_name(user));
  for (auto it = user.begin(); it != user.end(); ++it) {
    path.push_back(it.key());
    if (!base.contains(it.key())) ctx.error(path, "unknown key");
    ojson& slot = base[it.key()];
    const ojson& value = it.value();
    if (slot.is_object()) {
      merge(slot, value, path, ctx);
    } else if (slot.is_null()) {
      if (!value.is_null() && !(nullable_number(path) && value.is_number())) {
        ctx.error(path, std::string("expected a number or null, got ") + type_name(value));
      }
      slot = value;
    } else if (slot.is_number_integer()) {
      const bool integral = value.is_number_integer() ||
                            (value.is_number_float() && std::floor(value.get<double>()) == value.get<double>() &&
                             std::abs(value.get<double>()) < 9.0e15);
      if (!integral) ctx.error(path, std::string("expected an integer, got ") + type_name(value));
      if (slot.is_number_unsigned() && value.get<double>() < 0.0) ctx.error(path, "must be >= 0");
      slot = value.is_number_integer() ? value : ojson(static_cast<std::int64_t>(value.get<double>()));
    } else if (slot.is_number()) {
      if (!value.is_number()) ctx.error(path, std::string("expected a number, got ") + type_name(value));
      slot = value.get<double>();
    } else if (slot.is_array()) {
      if (!value.is_array() || value.size() != slot.size() ||
          !std::all_of(value.begin(), value.end(), [](const ojson& v) { return v.is_number(); })) {
        ctx.error(path, "expected an array of " + std::to_string(slot.size()) + " numbers");
      }
      slot = value;
    } else if (slot.type() != value.type()) {
      ctx.error(path, std::string("expected ") + type_name(slot) + ", got " + type_name(value));
    } else {
      slot = value;
    }
    path.pop_back();
  }
}

Vec3 vec_from(const ojson& j) { return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()}; }

RunConfig from_json(const ojson& j) {
  RunConfig c;
  c.version = j["version"].get<int>();
  c.seed = j["seed"].get<std::uint64_t>();
  c.threads = j["threads"].get<int>();

  const ojson& p = j["paths"];
  c.paths.cloud = p["cloud"].get<std::string>();
  c.paths.checkpoint = p["checkpoint"].get<std::string>();
  c.paths.points = p["points"].get<std::string>();
  c.paths.gt = p["gt"].get<std::string>();
  c.paths.oracle = p["oracle"].get<std::string>();
  c.paths.out_dir = p["out_dir"].get<std::string>();

  const ojson& a = j["arch"];
  c.train.arch.num_layers = a["num_layers"].get<int>();
  c.train.arch.hidden_width = a["hidden_width"].get<int>();
  c.train.arch.encoding_frequencies = a["encoding_frequencies"].get<int>();

  const ojson& s = j["sampler"];
  SamplerConfig& sc = c.train.sampler;
  sc.planes_per_batch = s["planes_per_batch"].get<std::size_t>();
  sc.roots_per_plane = s["roots_per_plane"].get<std::size_t>();
  sc.offsets_per_root = s["offsets_per_root"].get<std::size_t>();
  sc.T = s["T"].get<double>();
  sc.knn_k = s["knn_k"].get<std::size_t>();
  sc.queries_per_center = s["queries_per_center"].get<std::size_t>();
  sc.large_scale_threshold_factor = s["large_scale_threshold_factor"].get<double>();
  sc.large_scale_root_multiplier = s["large_scale_root_multiplier"].get<std::size_t>();

  const ojson& t = j["train"];
  TrainConfig& tc = c.train;
  tc.lambda_far = t["lambda_far"].get<double>();
  tc.lambda_near = t["lambda_near"].get<double>();
  tc.lambda_proj = t["lambda_proj"].get<double>();
  tc.lambda_ssim = t["lambda_ssim"].get<double>();
  tc.lambda_depth = t["lambda_depth"].get<double>();
  tc.lambda_normal = t["lambda_normal"].get<double>();
  tc.total_iters = t["total_iters"].get<std::int64_t>();
  tc.far_only_until = t["far_only_until"].get<std::int64_t>();
  tc.lr0 = t["lr0"].get<double>();
  tc.adam_beta1 = t["adam_beta1"].get<double>();
  tc.adam_beta2 = t["adam_beta2"].get<double>();
  tc.adam_epsilon = t["adam_epsilon"].get<double>();
  tc.gradient_mode = gradient_mode_from_string(t["gradient_mode"].get<std::string>());
  tc.grad_eps = t["grad_eps"].get<double>();
  tc.checkpoint_every = t["checkpoint_every"].get<std::int64_t>();
  tc.degenerate_abort_fraction = t["degenerate_abort_fraction"].get<double>();
  tc.degenerate_abort_window = t["degenerate_abort_window"].get<std::int64_t>();
  tc.seed = c.seed;

  const ojson& g = j["grid"];
  c.grid.bbox.lo = vec_from(g["bbox_min"]);
  c.grid.bbox.hi = vec_from(g["bbox_max"]);
  c.grid.resolution = g["resolution"].get<int>();
  if (!g["iso_band"].is_null()) c.grid.iso_band = g["iso_band"].get<double>();

  const ojson& d = j["deform"];
  c.deform.steps = d["steps"].get<int>();
  c.deform.step_fraction = d["step_fraction"].get<double>();
  c.deform.points = d["points"].get<std::size_t>();

  const ojson& e = j["eval"];
  c.eval.band = e["band"].get<double>();
  c.eval.resolution = e["resolution"].get<int>();
  c.eval.chamfer_mode = e["chamfer_mode"].get<std::string>();
  c.eval.surface_points = e["surface_points"].get<std::size_t>();
  c.eval.residual_threshold = e["residual_threshold"].get<double>();
  c.eval.grad_check_points = e["grad_check_points"].get<std::size_t>();
  c.eval.mesh_resolution = e["mesh_resolution"].get<int>();

  const ojson& y = j["synth"];
  c.synth.kind = y["kind"].get<std::string>();
  c.synth.n = y["n"].get<std::size_t>();
  c.synth.noise = y["noise"].get<double>();
  SceneOptions& so = c.synth.scene;
  so.radius = y["radius"].get<double>();
  so.half_extent = y["half_extent"].get<double>();
  so.half_gap = y["half_gap"].get<double>();
  so.sheet_radius = y["sheet_radius"].get<double>();
  so.sheet_half_angle = y["sheet_half_angle"].get<double>();
  so.scale_min = y["scale_min"].get<double>();
  so.scale_max = y["scale_max"].get<double>();
  so.gt_samples = y["gt_samples"].get<std::size_t>();
  return c;
}

// Wraps a library validation failure as a config error.
template <typename F>
void check(const Context& ctx, const std::vector<std::string>& path, F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    ctx.error(path, e.what());
  }
}

void validate_with(const RunConfig& c, const Context& ctx) {
  if (c.version != 1) ctx.error({"version"}, "unsupported config version " + std::to_string(c.version));
  if (c.threads < 1) ctx.error({"threads"}, "must be >= 1");
  check(ctx, {"arch"}, [&] { c.train.arch.validate(); });
  check(ctx, {"sampler"}, [&] { c.train.sampler.validate(); });
  check(ctx, {"train"}, [&] { c.train.validate(); });
  if (!(c.train.degenerate_abort_fraction >= 0.0 && c.train.degenerate_abort_fraction <= 1.0)) {
    ctx.error({"train", "degenerate_abort_fraction"}, "must be in [0, 1]");
  }
  if (c.train.degenerate_abort_window < 1) ctx.error({"train", "degenerate_abort_window"}, "must be >= 1");
  const Vec3 extent = c.grid.bbox.extent();
  if (!c.grid.bbox.lo.allFinite() || !c.grid.bbox.hi.allFinite() || !(extent.minCoeff() > 0.0)) {
    ctx.error({"grid", "bbox_max"}, "bbox must have positive extent on every axis");
  }
  if (c.grid.resolution < 8) ctx.error({"grid", "resolution"}, "must be >= 8");
  if (c.grid.iso_band && !(*c.grid.iso_band > 0.0)) ctx.error({"grid", "iso_band"}, "must be > 0");
  if (c.deform.steps < 1) ctx.error({"deform", "steps"}, "must be >= 1");
  if (!(c.deform.step_fraction > 0.0 && c.deform.step_fraction <= 1.0)) {
    ctx.error({"deform", "step_fraction"}, "must be in (0, 1]");
  }
  if (c.deform.points < 1) ctx.error({"deform", "points"}, "must be >= 1");
  if (!(c.eval.band > 0.0)) ctx.error({"eval", "band"}, "must be > 0");
  if (c.eval.resolution < 2) ctx.error({"eval", "resolution"}, "must be >= 2");
  check(ctx, {"eval", "chamfer_mode"}, [&] { chamfer_mode_from_string(c.eval.chamfer_mode); });
  if (c.eval.surface_points < 1) ctx.error({"eval", "surface_points"}, "must be >= 1");
  if (!(c.eval.residual_threshold > 0.0)) ctx.error({"eval", "residual_threshold"}, "must be > 0");
  if (c.eval.mesh_resolution != 0 && c.eval.mesh_resolution < 8) {
    ctx.error({"eval", "mesh_resolution"}, "must be 0 or >= 8");
  }
  check(ctx, {"synth", "kind"}, [&] { scene_kind_from_string(c.synth.kind); });
  if (c.synth.n < 1) ctx.error({"synth", "n"}, "must be >= 1");
  if (!(c.synth.noise >= 0.0) || !std::isfinite(c.synth.noise)) ctx.error({"synth", "noise"}, "must be >= 0");
  const SceneOptions& so = c.synth.scene;
  for (const auto& [key, value] : {std::pair<const char*, double>{"radius", so.radius},
                                   {"half_extent", so.half_extent},
                                   {"half_gap", so.half_gap},
                                   {"sheet_radius", so.sheet_radius},
                                   {"sheet_half_angle", so.sheet_half_angle},
                                   {"scale_min", so.scale_min}}) {
    if (!(value > 0.0) || !std::isfinite(value)) ctx.error({"synth", key}, "must be > 0");
  }
  if (!(so.scale_max >= so.scale_min)) ctx.error({"synth", "scale_max"}, "must be >= scale_min");
}

RunConfig parse_with(const ojson& user, const Context& ctx) {
  ojson merged = to_json(RunConfig{});
  std::vector<std::string> path;
  merge(merged, user, path, ctx);
  RunConfig config;
  check(ctx, {}, [&] { config = from_json(merged); });
  validate_with(config, ctx);
  return config;
}

}  // namespace

void RunConfig::validate() const {
  const std::string empty;
  const std::string source = "<config>";
  validate_with(*this, Context{empty, source});
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  const Context ctx{text, source};
  ojson user;
  try {
    user = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into a line number.
    const std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
    fail(ErrorCode::Config, source + ":" + std::to_string(line) + ": invalid JSON: " + e.what());
  }
  if (!user.is_object()) fail(ErrorCode::Config, source + ":1: config must be a JSON object");
  if (!user.contains("version")) fail(ErrorCode::Config, source + ":1: missing required key 'version'");
  return parse_with(user, ctx);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Config, "cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

void apply_override(RunConfig& config, const std::string& dotted_key, const std::string& value) {
  ojson parsed;
  try {
    parsed = ojson::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // bare string
  }
  ojson user = ojson::object();
  ojson* node = &user;
  std::vector<std::string> parts;
  std::stringstream ss(dotted_key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (parts.empty()) fail(ErrorCode::Config, "empty override key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = parsed;

  const std::string text;
  const std::string source = "override " + dotted_key;
  ojson merged = to_json(config);
  std::vector<std::string> path;
  const Context ctx{text, source};
  merge(merged, user, path, ctx);
  RunConfig updated;
  check(ctx, {}, [&] { updated = from_json(merged); });
  validate_with(updated, ctx);
  config = updated;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  ojson j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["paths"] = {{"cloud", c.paths.cloud},         {"checkpoint", c.paths.checkpoint},
                {"points", c.paths.points},       {"gt", c.paths.gt},
                {"oracle", c.paths.oracle},       {"out_dir", c.paths.out_dir}};
  j["arch"] = {{"num_layers", c.train.arch.num_layers},
               {"hidden_width", c.train.arch.hidden_width},
               {"encoding_frequencies", c.train.arch.encoding_frequencies}};
  const SamplerConfig& s = c.train.sampler;
  j["sampler"] = {{"planes_per_batch", s.planes_per_batch},
                  {"roots_per_plane", s.roots_per_plane},
                  {"offsets_per_root", s.offsets_per_root},
                  {"T", s.T},
                  {"knn_k", s.knn_k},
                  {"queries_per_center", s.queries_per_center},
                  {"large_scale_threshold_factor", s.large_scale_threshold_factor},
                  {"large_scale_root_multiplier", s.large_scale_root_multiplier}};
  const TrainConfig& t = c.train;
  j["train"] = {{"lambda_far", t.lambda_far},
                {"lambda_near", t.lambda_near},
                {"lambda_proj", t.lambda_proj},
                {"lambda_ssim", t.lambda_ssim},
                {"lambda_depth", t.lambda_depth},
                {"lambda_normal", t.lambda_normal},
                {"total_iters", t.total_iters},
                {"far_only_until", t.far_only_until},
                {"lr0", t.lr0},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_epsilon", t.adam_epsilon},
                {"gradient_mode", to_string(t.gradient_mode)},
                {"grad_eps", t.grad_eps},
                {"checkpoint_every", t.checkpoint_every},
                {"degenerate_abort_fraction", t.degenerate_abort_fraction},
                {"degenerate_abort_window", t.degenerate_abort_window}};
  j["grid"] = {{"bbox_min", vec_json(c.grid.bbox.lo)},
               {"bbox_max", vec_json(c.grid.bbox.hi)},
               {"resolution", c.grid.resolution},
               {"iso_band", c.grid.iso_band ? ojson(*c.grid.iso_band) : ojson(nullptr)}};
  j["deform"] = {{"steps", c.deform.steps}, {"step_fraction", c.deform.step_fraction}, {"points", c.deform.points}};
  j["eval"] = {{"band", c.eval.band},
               {"resolution", c.eval.resolution},
               {"chamfer_mode", c.eval.chamfer_mode},
               {"surface_points", c.eval.surface_points},
               {"residual_threshold", c.eval.residual_threshold},
               {"grad_check_points", c.eval.grad_check_points},
               {"mesh_resolution", c.eval.mesh_resolution}};
  const SceneOptions& so = c.synth.scene;
  j["synth"] = {{"kind", c.synth.kind},
                {"n", c.synth.n},
                {"noise", c.synth.noise},
                {"radius", so.radius},
                {"half_extent", so.half_extent},
                {"half_gap", so.half_gap},
                {"sheet_radius", so.sheet_radius},
                {"sheet_half_angle", so.sheet_half_angle},
                {"scale_min", so.scale_min},
                {"scale_max", so.scale_max},
                {"gt_samples", so.gt_samples}};
  return j;
}

}  // namespace udf
