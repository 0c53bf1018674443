#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "diffcal/shapes.hpp"

namespace diffcal::cli {

using nlohmann::json;

std::string fingerprint(const std::string& text);

json vector_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j, const std::string& what);

json shape_json(const Shape& shape);
Shape shape_from_json(const json& j);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

// <dir>/stage.json records the stage name, a fingerprint of everything the
// outputs depend on, and the output files. A stage is up to date when the
// manifest matches and every listed output still exists.
bool stage_up_to_date(const std::filesystem::path& dir, const std::string& stage,
                      const std::string& key);
void write_manifest(const std::filesystem::path& dir, const std::string& stage,
                    const std::string& key, const std::vector<std::string>& outputs);

// Runs body(i) for i in [0, n) on `jobs` threads; rethrows the first error.
void parallel_for(int n, int jobs, const std::function<void(int)>& body);

}  // namespace diffcal::cli
