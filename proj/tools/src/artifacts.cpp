#include "artifacts.hpp"

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "diffcal/error.hpp"
#include "diffcal/io.hpp"

namespace diffcal::cli {

namespace fs = std::filesystem;

std::string fingerprint(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(encode_double(v(i)));
  return a;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidInput(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string()) throw InvalidInput(what + ": expected encoded numbers");
    v(static_cast<Eigen::Index>(i)) = decode_double(j[i].get<std::string>());
  }
  return v;
}

json shape_json(const Shape& shape) {
  json j;
  j["kind"] = kind_name(kind_of(shape));
  if (const auto* img = std::get_if<GridImage>(&shape)) {
    const auto& g = img->geometry;
    j["geometry"] = {{"rows", g.rows}, {"cols", g.cols},
                     {"x0", encode_double(g.x0)}, {"y0", encode_double(g.y0)},
                     {"x1", encode_double(g.x1)}, {"y1", encode_double(g.y1)}};
  } else {
    j["points"] = static_cast<int>(points_of(shape).rows());
    j["dim"] = static_cast<int>(points_of(shape).cols());
  }
  j["dofs"] = vector_json(dofs(shape));
  return j;
}

Shape shape_from_json(const json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const Eigen::VectorXd flat = vector_from_json(j.at("dofs"), "shape dofs");
    Shape shape;
    if (kind == kind_name(ShapeKind::Image)) {
      const json& g = j.at("geometry");
      GridImage img;
      img.geometry.rows = g.at("rows").get<int>();
      img.geometry.cols = g.at("cols").get<int>();
      img.geometry.x0 = decode_double(g.at("x0").get<std::string>());
      img.geometry.y0 = decode_double(g.at("y0").get<std::string>());
      img.geometry.x1 = decode_double(g.at("x1").get<std::string>());
      img.geometry.y1 = decode_double(g.at("y1").get<std::string>());
      img.geometry.validate();
      img.values = GridField::Zero(img.geometry.rows, img.geometry.cols);
      shape = img;
    } else {
      const int n = j.at("points").get<int>();
      const int d = j.at("dim").get<int>();
      if (n < 1 || d < 1) throw InvalidInput("shape has no points");
      PointSet p = PointSet::Zero(n, d);
      if (kind == kind_name(ShapeKind::Landmarks)) {
        shape = LandmarkShape{p};
      } else if (kind == kind_name(ShapeKind::Curve)) {
        shape = CurveShape{p};
      } else {
        throw InvalidInput("unknown shape kind '" + kind + "'");
      }
    }
    if (flat.size() != dof_count(shape)) throw InvalidInput("shape dofs do not match its size");
    shape = with_dofs(shape, flat);
    validate(shape);
    return shape;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed shape document: ") + e.what());
  }
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(path.string() + ": not valid JSON: " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

bool stage_up_to_date(const fs::path& dir, const std::string& stage, const std::string& key) {
  const fs::path manifest = dir / "stage.json";
  if (!fs::exists(manifest)) return false;
  json j;
  try {
    j = json::parse(read_text(manifest));
    if (j.at("stage").get<std::string>() != stage || j.at("key").get<std::string>() != key) {
      return false;
    }
    for (const auto& f : j.at("outputs")) {
      if (!fs::exists(dir / f.get<std::string>())) return false;
    }
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

void write_manifest(const fs::path& dir, const std::string& stage, const std::string& key,
                    const std::vector<std::string>& outputs) {
  write_json(dir / "stage.json", {{"stage", stage}, {"key", key}, {"outputs", outputs}});
}

void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (error) return;
        }
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace diffcal::cli
