#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "diffcal/shapes.hpp"

namespace diffcal {

// Exact textual form of a double ("%a" hex float) and its inverse.
std::string encode_double(double x);
double decode_double(const std::string& text);

// "# grid H W x0 y0 x1 y1" then H lines of W values, row 0 = smallest y.
void write_grid_file(const std::filesystem::path& path, const GridImage& image);
GridImage read_grid_file(const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  Eigen::Index column(const std::string& name) const;
};

// Numeric CSV with a header row; doubles written with 17 significant digits.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

// Two-column (t, y) curve file; a header row is optional.
void read_curve_csv(const std::filesystem::path& path, Eigen::VectorXd& t, Eigen::VectorXd& y);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace diffcal
