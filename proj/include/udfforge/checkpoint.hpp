#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "json.hpp"
#include "udfforge/field.hpp"
#include "udfforge/types.hpp"

namespace udf {

/// Adam moments carried in a checkpoint so training can resume.
struct OptimizerSnapshot {
  std::int64_t step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
};

/// Contents of a field file. The file is one line of JSON header followed by
/// the raw little-endian float64 parameter vector (and optional moments).
struct FieldFile {
  std::unique_ptr<Field> field;
  SceneTransform transform;
  std::int64_t iteration = 0;
  std::optional<OptimizerSnapshot> optimizer;
};

void save_field_file(const std::string& path, const Field& field,
                     const SceneTransform& transform = {},
                     std::int64_t iteration = 0,
                     const OptimizerSnapshot* optimizer = nullptr);

FieldFile load_field_file(const std::string& path);

nlohmann::json analytic_to_json(const AnalyticField& field);
AnalyticField analytic_from_json(const nlohmann::json& j);

nlohmann::json arch_to_json(const FieldArch& arch);
FieldArch arch_from_json(const nlohmann::json& j);

}  // namespace udf
