#pragma once

#include <Eigen/Core>

namespace diffcal {

// n x d coordinates, one point per row. Row-major so that the flat buffer
// matches the (x0, y0, x1, y1, ...) degree-of-freedom layout used everywhere.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Scalar field on a grid; row r is the r-th y level, column c the c-th x level.
using GridField = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class KernelFamily { Gaussian };

// Scalar kernel k(x, y) = amplitude * exp(-|x - y|^2 / (2 lengthscale^2)),
// acting on vector fields as k(x, y) * Id.
struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double lengthscale = 1.0;
  double amplitude = 1.0;

  void validate() const;

  double operator()(double squared_distance) const;
  // dk / d(r^2)
  double derivative(double squared_distance) const;
};

// Cell-centred uniform grid over the box [x0, x1] x [y0, y1].
struct GridGeometry {
  int rows = 0;
  int cols = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 1.0;
  double y1 = 1.0;

  double hx() const { return (x1 - x0) / cols; }
  double hy() const { return (y1 - y0) / rows; }
  double cell_area() const { return hx() * hy(); }
  double x_center(int col) const { return x0 + (col + 0.5) * hx(); }
  double y_center(int row) const { return y0 + (row + 0.5) * hy(); }

  void validate() const;
  bool operator==(const GridGeometry&) const = default;
};

struct GridVectorField {
  GridField x;
  GridField y;
};

Eigen::MatrixXd kernel_matrix(const PointSet& points_a, const PointSet& points_b,
                              const KernelSpec& spec);

// sum_i k(x, q_i) p_i
Eigen::VectorXd velocity_at(const Eigen::VectorXd& x, const PointSet& control_points,
                            const PointSet& momenta, const KernelSpec& spec);

// velocity_at evaluated at every row of `at`.
PointSet velocity_field(const PointSet& at, const PointSet& control_points,
                     const PointSet& momenta, const KernelSpec& spec);

// Discrete kernel smoothing on a grid: v(x_a) = A * sum_b k(x_a - x_b) m_b with
// A the cell area. Cells outside the domain contribute nothing.
//
// Holds the two 1-D factors of the separable Gaussian so repeated calls on
// the same grid only pay for two small dense products per component.
class GridConvolver {
 public:
  GridConvolver(const GridGeometry& geometry, const KernelSpec& spec);

  GridField apply(const GridField& field) const;
  GridVectorField apply(const GridVectorField& field) const;

  const GridGeometry& geometry() const { return geometry_; }

 private:
  GridGeometry geometry_;
  Eigen::MatrixXd along_x_;  // cols x cols
  Eigen::MatrixXd along_y_;  // rows x rows
  double scale_ = 1.0;
};

GridVectorField convolve_grid(const GridVectorField& momentum_field,
                              const GridGeometry& geometry, const KernelSpec& spec);

}  // namespace diffcal
