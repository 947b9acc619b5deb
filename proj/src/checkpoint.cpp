#include "udfforge/checkpoint.hpp"

#include <fstream>

#include "udfforge/binary_io.hpp"
#include "udfforge/error.hpp"

namespace udf {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "udfforge-field";
constexpr int kVersion = 1;

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::Parse, std::string(what) + ": expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64_le(out, v[i]);
}

Eigen::VectorXd read_vector(std::istream& in, std::size_t n, const std::string& path) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!io::read_f64_le(in, v[static_cast<Eigen::Index>(i)])) {
      fail(ErrorCode::Parse, path + ": truncated payload (expected " + std::to_string(n) + " values)");
    }
  }
  return v;
}

}  // namespace

json arch_to_json(const FieldArch& arch) {
  return {{"num_layers", arch.num_layers},
          {"hidden_width", arch.hidden_width},
          {"encoding_frequencies", arch.encoding_frequencies}};
}

FieldArch arch_from_json(const json& j) {
  FieldArch arch;
  arch.num_layers = j.at("num_layers").get<int>();
  arch.hidden_width = j.at("hidden_width").get<int>();
  arch.encoding_frequencies = j.at("encoding_frequencies").get<int>();
  arch.validate();
  return arch;
}

json analytic_to_json(const AnalyticField& field) {
  const auto& p = field.params();
  return {{"kind", to_string(field.kind())},
          {"center", vec_to_json(p.center)},
          {"normal", vec_to_json(p.normal)},
          {"radius", p.radius},
          {"offset", p.offset},
          {"half_gap", p.half_gap},
          {"half_angle", p.half_angle},
          {"half_length", p.half_length},
          {"shift", p.shift}};
}

AnalyticField analytic_from_json(const json& j) {
  AnalyticField::Params p;
  const AnalyticKind kind = analytic_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("center")) p.center = vec_from_json(j["center"], "center");
  if (j.contains("normal")) p.normal = vec_from_json(j["normal"], "normal");
  p.radius = j.value("radius", p.radius);
  p.offset = j.value("offset", p.offset);
  p.half_gap = j.value("half_gap", p.half_gap);
  p.half_angle = j.value("half_angle", p.half_angle);
  p.half_length = j.value("half_length", p.half_length);
  p.shift = j.value("shift", p.shift);
  return {kind, p};
}

void save_field_file(const std::string& path, const Field& field, const SceneTransform& transform,
                     std::int64_t iteration, const OptimizerSnapshot* optimizer) {
  json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["transform"] = {{"scale", transform.scale}, {"translation", vec_to_json(transform.translation)}};
  header["iteration"] = iteration;

  const auto* neural = dynamic_cast<const NeuralField*>(&field);
  const auto* analytic = dynamic_cast<const AnalyticField*>(&field);
  if (neural != nullptr) {
    header["type"] = "neural";
    header["arch"] = arch_to_json(neural->arch());
    header["seed"] = neural->seed();
    header["param_count"] = neural->parameters().size();
    if (optimizer != nullptr) {
      if (optimizer->first_moment.size() != neural->parameters().size() ||
          optimizer->second_moment.size() != neural->parameters().size()) {
        fail(ErrorCode::InvalidArgument, "optimizer moments do not match the parameter vector");
      }
      header["optimizer"] = {{"step", optimizer->step}, {"moments", true}};
    }
  } else if (analytic != nullptr) {
    header["type"] = "analytic";
    header["analytic"] = analytic_to_json(*analytic);
    header["param_count"] = 0;
  } else {
    fail(ErrorCode::InvalidArgument, "save_field_file: unsupported field type");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << header.dump() << '\n';
  if (neural != nullptr) {
    write_vector(out, neural->parameters());
    if (optimizer != nullptr) {
      write_vector(out, optimizer->first_moment);
      write_vector(out, optimizer->second_moment);
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

FieldFile load_field_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open field file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Parse, path + ":1: missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Parse, path + ":1: malformed header: " + e.what());
  }

  FieldFile file;
  try {
    if (header.value("format", "") != kFormat) fail(ErrorCode::Parse, path + ":1: not a udfforge field file");
    if (header.value("version", 0) != kVersion) fail(ErrorCode::Parse, path + ":1: unsupported version");
    if (header.contains("transform")) {
      file.transform.scale = header["transform"].at("scale").get<double>();
      file.transform.translation = vec_from_json(header["transform"].at("translation"), "translation");
    }
    file.iteration = header.value("iteration", std::int64_t{0});
    const std::string type = header.at("type").get<std::string>();
    if (type == "analytic") {
      file.field = std::make_unique<AnalyticField>(analytic_from_json(header.at("analytic")));
    } else if (type == "neural") {
      const FieldArch arch = arch_from_json(header.at("arch"));
      const auto count = header.at("param_count").get<std::size_t>();
      if (count != arch.parameter_count()) {
        fail(ErrorCode::Parse, path + ":1: param_count " + std::to_string(count) + " does not match arch");
      }
      Eigen::VectorXd params = read_vector(in, count, path);
      file.field = std::make_unique<NeuralField>(arch, header.at("seed").get<std::uint64_t>(), std::move(params));
      if (header.contains("optimizer") && header["optimizer"].value("moments", false)) {
        OptimizerSnapshot snap;
        snap.step = header["optimizer"].at("step").get<std::int64_t>();
        snap.first_moment = read_vector(in, count, path);
        snap.second_moment = read_vector(in, count, path);
        file.optimizer = std::move(snap);
      }
    } else {
      fail(ErrorCode::Parse, path + ":1: unknown field type '" + type + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, path + ":1: " + e.what());
  }
  return file;
}

}  // namespace udf
