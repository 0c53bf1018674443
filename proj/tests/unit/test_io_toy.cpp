#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "diffcal/error.hpp"
#include "diffcal/io.hpp"
#include "diffcal/toy.hpp"

namespace diffcal {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("diffcal_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(HexFloat, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, (i % 40) - 20);
    EXPECT_EQ(decode_double(encode_double(x)), x);
  }
  for (double x : {0.0, -0.0, std::numeric_limits<double>::denorm_min(),
                   std::numeric_limits<double>::max(), std::numeric_limits<double>::infinity()}) {
    EXPECT_EQ(decode_double(encode_double(x)), x);
  }
  EXPECT_THROW(decode_double("abc"), InvalidInput);
  EXPECT_THROW(decode_double(""), InvalidInput);
}

TEST(GridFile, RoundTripIsLossless) {
  const fs::path dir = scratch_dir("grid");
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  GridImage img{GridGeometry{5, 7, -1.0, 0.0, 2.5, 1.0}, GridField(5, 7)};
  for (Eigen::Index i = 0; i < img.values.size(); ++i) img.values.data()[i] = g(rng) * 1e-3;
  write_grid_file(dir / "a.grid", img);
  const GridImage back = read_grid_file(dir / "a.grid");
  EXPECT_EQ(back.geometry, img.geometry);
  EXPECT_EQ(back.values, img.values);
  std::ifstream in(dir / "a.grid");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "# grid 5 7 -1 0 2.5 1");
}

TEST(GridFile, RejectsMalformedFiles) {
  const fs::path dir = scratch_dir("badgrid");
  auto write = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    return dir / name;
  };
  EXPECT_THROW(read_grid_file(dir / "missing.grid"), InvalidInput);
  EXPECT_THROW(read_grid_file(write("h.grid", "# grod 1 1 0 0 1 1\n0\n")), InvalidInput);
  EXPECT_THROW(read_grid_file(write("r.grid", "# grid 2 2 0 0 1 1\n0 1\n")), InvalidInput);
  EXPECT_THROW(read_grid_file(write("c.grid", "# grid 1 2 0 0 1 1\n0 1 2\n")), InvalidInput);
  EXPECT_THROW(read_grid_file(write("n.grid", "# grid 1 2 0 0 1 1\n0 nan\n")), InvalidInput);
  EXPECT_THROW(read_grid_file(write("b.grid", "# grid 1 1 1 0 0 1\n0\n")), InvalidInput);
}

TEST(Csv, RoundTripAndErrors) {
  const fs::path dir = scratch_dir("csv");
  CsvTable t{{"a", "b"}, Eigen::MatrixXd(2, 2)};
  t.values << 0.1, 1.0 / 3.0, -2.5e-12, 7.0;
  write_csv(dir / "t.csv", t);
  const CsvTable back = read_csv(dir / "t.csv");
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.values, t.values);
  EXPECT_EQ(back.column("b"), 1);
  EXPECT_THROW(back.column("c"), InvalidInput);
  write_text(dir / "bad.csv", "a,b\n1,2\n3\n");
  EXPECT_THROW(read_csv(dir / "bad.csv"), InvalidInput);
  write_text(dir / "bad2.csv", "a,b\n1,x\n");
  EXPECT_THROW(read_csv(dir / "bad2.csv"), InvalidInput);
}

TEST(Csv, CurveFiles) {
  const fs::path dir = scratch_dir("curve");
  write_text(dir / "c.csv", "t,y\n0,1\n0.5,2\n1,0\n");
  Eigen::VectorXd t, y;
  read_curve_csv(dir / "c.csv", t, y);
  EXPECT_EQ(t, Eigen::Vector3d(0, 0.5, 1));
  EXPECT_EQ(y, Eigen::Vector3d(1, 2, 0));
  write_text(dir / "d.csv", "0,1\n1,2\n");
  read_curve_csv(dir / "d.csv", t, y);
  EXPECT_EQ(t.size(), 2);
  write_text(dir / "e.csv", "t,y\n0,1\n");
  EXPECT_THROW(read_curve_csv(dir / "e.csv", t, y), InvalidInput);
}

TEST(ToyImage, CentredBumpWithZeroAmplitudes) {
  const GridImage img = toy_image(Eigen::Vector4d(0.0, 0.0, 0.3, 0.6));
  ASSERT_EQ(img.values.rows(), 32);
  // Radially symmetric about the grid centre.
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      EXPECT_DOUBLE_EQ(img.values(r, c), img.values(31 - r, 31 - c));
      EXPECT_DOUBLE_EQ(img.values(r, c), img.values(c, r));
    }
  // Nearest pixel centre to the middle is at distance sqrt(2)/64.
  const double rc2 = 2.0 / (64.0 * 64.0);
  EXPECT_NEAR(img.values(15, 15), std::exp(-6.0 * rc2), 1e-15);
  EXPECT_NEAR(img.values.maxCoeff(), std::exp(-6.0 * rc2), 1e-15);
}

TEST(ToyImage, FormulaAtAPixel) {
  const Eigen::Vector4d b = toy_reference_beta();
  const GridImage img = toy_image(b);
  const double x = (5 + 0.5) / 32 - 0.5, y = (20 + 0.5) / 32 - 0.5;
  const double a = x + b(0) * std::sin(2 * M_PI * b(2) * y);
  const double c = y + b(1) * std::cos(2 * M_PI * b(3) * x);
  EXPECT_NEAR(img.values(20, 5), std::exp(-6 * (a * a + c * c)), 1e-15);
  EXPECT_EQ(b, Eigen::Vector4d(0.2, 0.3, 0.4, 0.8));
  EXPECT_THROW(toy_image(b, 1), InvalidInput);
}

TEST(LatinHypercube, StratifiedAndSeeded) {
  const Eigen::Vector4d lo = toy_lower_bounds(), hi = toy_upper_bounds();
  const Eigen::MatrixXd d = latin_hypercube(300, lo, hi, 42);
  ASSERT_EQ(d.rows(), 300);
  for (int j = 0; j < 4; ++j) {
    std::vector<int> hits(300, 0);
    for (int i = 0; i < 300; ++i) {
      EXPECT_GE(d(i, j), lo(j));
      EXPECT_LE(d(i, j), hi(j));
      ++hits[std::min(299, static_cast<int>((d(i, j) - lo(j)) / (hi(j) - lo(j)) * 300))];
    }
    for (int h : hits) EXPECT_EQ(h, 1);
  }
  EXPECT_EQ(latin_hypercube(300, lo, hi, 42), d);
  EXPECT_NE(latin_hypercube(300, lo, hi, 43), d);
  EXPECT_THROW(latin_hypercube(3, hi, lo, 1), InvalidInput);
  EXPECT_THROW(latin_hypercube(0, lo, hi, 1), InvalidInput);
}

}  // namespace
}  // namespace diffcal
