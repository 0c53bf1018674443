#include "diffcal/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && errno != ERANGE;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

std::string encode_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double decode_double(const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw InvalidInput("not a number: '" + text + "'");
  return v;
}

void write_grid_file(const std::filesystem::path& path, const GridImage& image) {
  validate(Shape{image});
  const GridGeometry& g = image.geometry;
  std::ofstream out = open_out(path);
  out << "# grid " << g.rows << ' ' << g.cols << ' ' << g.x0 << ' ' << g.y0 << ' ' << g.x1
      << ' ' << g.y1 << '\n';
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) out << (c ? " " : "") << image.values(r, c);
    out << '\n';
  }
  if (!out) throw InvalidInput("failed writing " + path.string());
}

GridImage read_grid_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": empty grid file");
  std::istringstream head(line);
  std::string hash, tag;
  GridGeometry g;
  if (!(head >> hash >> tag >> g.rows >> g.cols >> g.x0 >> g.y0 >> g.x1 >> g.y1) ||
      hash != "#" || tag != "grid") {
    throw InvalidInput(path.string() + ": bad grid header");
  }
  try {
    g.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
  GridImage img{g, GridField(g.rows, g.cols)};
  for (int r = 0; r < g.rows; ++r) {
    if (!std::getline(in, line)) throw InvalidInput(path.string() + ": missing grid rows");
    std::istringstream row(line);
    std::string tok;
    for (int c = 0; c < g.cols; ++c) {
      double v;
      if (!(row >> tok) || !parse_number(tok, v) || !std::isfinite(v)) {
        throw InvalidInput(path.string() + ": bad value at row " + std::to_string(r));
      }
      img.values(r, c) = v;
    }
    if (row >> tok) throw InvalidInput(path.string() + ": too many values in a row");
  }
  while (std::getline(in, line)) {
    if (!trim(line).empty()) throw InvalidInput(path.string() + ": trailing data");
  }
  return img;
}

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<Eigen::Index>(i);
  }
  throw InvalidInput("missing CSV column '" + name + "'");
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  if (!table.header.empty() && static_cast<Eigen::Index>(table.header.size()) != table.values.cols()) {
    throw InvalidInput("CSV header does not match the column count");
  }
  std::ofstream out = open_out(path);
  for (std::size_t i = 0; i < table.header.size(); ++i) out << (i ? "," : "") << table.header[i];
  out << '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      out << (c ? "," : "") << table.values(r, c);
    }
    out << '\n';
  }
  if (!out) throw InvalidInput("failed writing " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": empty CSV");
  for (const std::string& h : split(line, ',')) table.header.push_back(trim(h));
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != table.header.size()) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!parse_number(cells[i], row[i])) {
        throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": bad number");
      }
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) table.values(r, c) = rows[r][c];
  }
  return table;
}

void read_curve_csv(const std::filesystem::path& path, Eigen::VectorXd& t, Eigen::VectorXd& y) {
  std::ifstream in = open_in(path);
  std::vector<double> ts, ys;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    double a, b;
    const bool ok = cells.size() == 2 && parse_number(cells[0], a) && parse_number(cells[1], b);
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw InvalidInput(path.string() + ": curve rows must be 't,y'");
    }
    first = false;
    ts.push_back(a);
    ys.push_back(b);
  }
  if (ts.size() < 2) throw InvalidInput(path.string() + ": a curve needs at least 2 rows");
  t = Eigen::Map<Eigen::VectorXd>(ts.data(), static_cast<Eigen::Index>(ts.size()));
  y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw InvalidInput("failed writing " + path.string());
}

}  // namespace diffcal
