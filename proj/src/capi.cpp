#include "udfforge/udfforge.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "udfforge/checkpoint.hpp"
#include "udfforge/commands.hpp"
#include "udfforge/error.hpp"
#include "udfforge/parallel.hpp"
#include "udfforge/surfel.hpp"

struct udf_config {
  udf::RunConfig config;
};

struct udf_cloud {
  udf::SurfelCloud cloud;
};

struct udf_field {
  udf::FieldFile file;
};

namespace {

thread_local std::string g_last_error;

udf_status status_of(udf::ErrorCode code) {
  switch (code) {
    case udf::ErrorCode::InvalidArgument: return UDF_ERR_INVALID_ARGUMENT;
    case udf::ErrorCode::Io: return UDF_ERR_IO;
    case udf::ErrorCode::Parse: return UDF_ERR_PARSE;
    case udf::ErrorCode::Config: return UDF_ERR_CONFIG;
    case udf::ErrorCode::Runtime: return UDF_ERR_RUNTIME;
  }
  return UDF_ERR_INTERNAL;
}

template <typename F>
udf_status guard(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return UDF_OK;
  } catch (const udf::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return UDF_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UDF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return UDF_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) udf::fail(udf::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_out(char** out, const std::string& s) {
  if (out) *out = copy_string(s);
}

}  // namespace

extern "C" {

const char* udf_version(void) { return "0.1.0"; }

const char* udf_last_error(void) { return g_last_error.c_str(); }

const char* udf_status_name(udf_status status) {
  switch (status) {
    case UDF_OK: return "ok";
    case UDF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case UDF_ERR_IO: return "i/o error";
    case UDF_ERR_PARSE: return "parse error";
    case UDF_ERR_CONFIG: return "configuration error";
    case UDF_ERR_RUNTIME: return "runtime error";
    case UDF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void udf_string_free(char* s) { std::free(s); }

udf_status udf_config_default(udf_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new udf_config{};
  });
}

udf_status udf_config_parse(const char* json_text, const char* source, udf_config** out) {
  return guard([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new udf_config{udf::parse_run_config(json_text, source ? source : "<config>")};
  });
}

udf_status udf_config_load(const char* path, udf_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new udf_config{udf::load_run_config(path)};
  });
}

udf_status udf_config_set(udf_config* config, const char* dotted_key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(dotted_key, "dotted_key");
    require(value, "value");
    udf::apply_override(config->config, dotted_key, value);
  });
}

udf_status udf_config_to_json(const udf_config* config, char** out_json) {
  return guard([&] {
    require(config, "config");
    require(out_json, "out_json");
    *out_json = copy_string(udf::to_json(config->config).dump(2));
  });
}

void udf_config_free(udf_config* config) { delete config; }

udf_status udf_cmd_synth(const udf_config* config) {
  return guard([&] {
    require(config, "config");
    udf::run_synth(config->config);
  });
}

udf_status udf_cmd_train(const udf_config* config, const char* resume_path, udf_record_fn on_record, void* user) {
  return guard([&] {
    require(config, "config");
    std::function<void(const udf::MetricRecord&)> hook;
    if (on_record) {
      hook = [&](const udf::MetricRecord& r) { on_record(udf::to_json(r).dump().c_str(), user); };
    }
    udf::run_train(config->config, resume_path ? resume_path : "", hook);
  });
}

udf_status udf_cmd_extract(const udf_config* config, char** out_summary_json) {
  return guard([&] {
    require(config, "config");
    const udf::ExtractionStats s = udf::run_extract(config->config);
    nlohmann::ordered_json j{{"crossing_edges", s.crossing_edges},
                             {"active_cubes", s.active_cubes},
                             {"inconsistent_cubes", s.inconsistent_cubes},
                             {"degenerate_triangles", s.degenerate_triangles}};
    set_out(out_summary_json, j.dump());
  });
}

udf_status udf_cmd_deform(const udf_config* config, char** out_summary_json) {
  return guard([&] {
    require(config, "config");
    const udf::DeformationTrace trace = udf::run_deform(config->config);
    nlohmann::ordered_json j{{"mean_residual", trace.mean_residual}};
    set_out(out_summary_json, j.dump());
  });
}

udf_status udf_cmd_eval(const udf_config* config, char** out_report_json, char** out_table) {
  return guard([&] {
    require(config, "config");
    const udf::EvalReport report = udf::run_eval(config->config);
    set_out(out_report_json, udf::to_json(report).dump(2));
    set_out(out_table, udf::format_report(report));
  });
}

udf_status udf_cmd_export_field(const udf_config* config) {
  return guard([&] {
    require(config, "config");
    udf::run_export_field(config->config);
  });
}

udf_status udf_cloud_load(const char* path, udf_cloud** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new udf_cloud{udf::load_cloud(path)};
  });
}

udf_status udf_cloud_save(const udf_cloud* cloud, const char* path, int binary) {
  return guard([&] {
    require(cloud, "cloud");
    require(path, "path");
    udf::save_cloud(cloud->cloud, path, binary ? udf::CloudFormat::Binary : udf::CloudFormat::Text);
  });
}

size_t udf_cloud_size(const udf_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

udf_status udf_cloud_center(const udf_cloud* cloud, size_t index, double out_xyz[3]) {
  return guard([&] {
    require(cloud, "cloud");
    require(out_xyz, "out_xyz");
    if (index >= cloud->cloud.size()) udf::fail(udf::ErrorCode::InvalidArgument, "surfel index out of range");
    const udf::Vec3& c = cloud->cloud.surfels[index].center;
    out_xyz[0] = c.x();
    out_xyz[1] = c.y();
    out_xyz[2] = c.z();
  });
}

void udf_cloud_free(udf_cloud* cloud) { delete cloud; }

udf_status udf_field_load(const char* path, udf_field** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new udf_field{udf::load_field_file(path)};
  });
}

udf_status udf_field_save(const udf_field* field, const char* path) {
  return guard([&] {
    require(field, "field");
    require(path, "path");
    const udf::FieldFile& f = field->file;
    udf::save_field_file(path, *f.field, f.transform, f.iteration, f.optimizer ? &*f.optimizer : nullptr);
  });
}

udf_status udf_field_eval(const udf_field* field, const double* xyz, size_t n, double* values) {
  return guard([&] {
    require(field, "field");
    if (n == 0) return;
    require(xyz, "xyz");
    require(values, "values");
    udf::PointSet points(n);
    for (size_t i = 0; i < n; ++i) points[i] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
    field->file.field->eval_batch(points, std::span<double>(values, n));
  });
}

udf_status udf_field_eval_with_grad(const udf_field* field, const double* xyz, size_t n, double* values,
                                    double* grads) {
  return guard([&] {
    require(field, "field");
    if (n == 0) return;
    require(xyz, "xyz");
    require(values, "values");
    require(grads, "grads");
    udf::PointSet points(n);
    for (size_t i = 0; i < n; ++i) points[i] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
    std::vector<udf::Vec3> g(n);
    field->file.field->eval_with_grad_batch(points, std::span<double>(values, n), g);
    for (size_t i = 0; i < n; ++i) {
      grads[3 * i] = g[i].x();
      grads[3 * i + 1] = g[i].y();
      grads[3 * i + 2] = g[i].z();
    }
  });
}

void udf_field_free(udf_field* field) { delete field; }

void udf_set_threads(int threads) { udf::set_max_threads(threads); }

}  // extern "C"
