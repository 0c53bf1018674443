#include "diffcal/kernels.hpp"

#include <cmath>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

void require_finite(const PointSet& points, const char* what) {
  if (!points.allFinite()) {
    throw InvalidInput(std::string(what) + " contains non-finite coordinates");
  }
}

void require_dimension(Eigen::Index d) {
  if (d < 1 || d > 3) {
    throw InvalidInput("ambient dimension must be 1, 2 or 3, got " + std::to_string(d));
  }
}

// Sampled 1-D Gaussian factor exp(-(i - j)^2 h^2 / (2 l^2)) on n cells.
Eigen::MatrixXd gaussian_factor(int n, double spacing, double lengthscale) {
  Eigen::MatrixXd g(n, n);
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = (i - j) * spacing;
      g(i, j) = std::exp(-d * d * inv);
    }
  }
  return g;
}

}  // namespace

void KernelSpec::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) {
    throw InvalidInput("kernel lengthscale must be positive and finite");
  }
  if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
    throw InvalidInput("kernel amplitude must be positive and finite");
  }
}

double KernelSpec::operator()(double squared_distance) const {
  return amplitude * std::exp(-squared_distance / (2.0 * lengthscale * lengthscale));
}

double KernelSpec::derivative(double squared_distance) const {
  return -(*this)(squared_distance) / (2.0 * lengthscale * lengthscale);
}

void GridGeometry::validate() const {
  if (rows < 2 || cols < 2) {
    throw InvalidInput("grid must have at least 2 rows and 2 columns");
  }
  if (!(x1 > x0) || !(y1 > y0) || !std::isfinite(x0) || !std::isfinite(x1) ||
      !std::isfinite(y0) || !std::isfinite(y1)) {
    throw InvalidInput("grid box must be finite with x1 > x0 and y1 > y0");
  }
}

Eigen::MatrixXd kernel_matrix(const PointSet& points_a, const PointSet& points_b,
                              const KernelSpec& spec) {
  spec.validate();
  require_finite(points_a, "points_a");
  require_finite(points_b, "points_b");
  if (points_a.cols() != points_b.cols()) {
    throw InvalidInput("kernel_matrix: point sets have different dimensions");
  }
  require_dimension(points_a.cols());
  Eigen::MatrixXd k(points_a.rows(), points_b.rows());
  for (Eigen::Index i = 0; i < points_a.rows(); ++i) {
    for (Eigen::Index j = 0; j < points_b.rows(); ++j) {
      k(i, j) = spec((points_a.row(i) - points_b.row(j)).squaredNorm());
    }
  }
  return k;
}

Eigen::VectorXd velocity_at(const Eigen::VectorXd& x, const PointSet& control_points,
                            const PointSet& momenta, const KernelSpec& spec) {
  if (control_points.rows() != momenta.rows() || control_points.cols() != momenta.cols() ||
      x.size() != control_points.cols()) {
    throw InvalidInput("velocity_at: dimension mismatch");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index i = 0; i < control_points.rows(); ++i) {
    v += spec((x.transpose() - control_points.row(i)).squaredNorm()) *
         momenta.row(i).transpose();
  }
  return v;
}

PointSet velocity_field(const PointSet& at, const PointSet& control_points,
                     const PointSet& momenta, const KernelSpec& spec) {
  if (control_points.rows() != momenta.rows() || control_points.cols() != momenta.cols() ||
      at.cols() != control_points.cols()) {
    throw InvalidInput("velocity_field: dimension mismatch");
  }
  return kernel_matrix(at, control_points, spec) * momenta;
}

GridConvolver::GridConvolver(const GridGeometry& geometry, const KernelSpec& spec)
    : geometry_(geometry),
      along_x_(gaussian_factor(geometry.cols, geometry.hx(), spec.lengthscale)),
      along_y_(gaussian_factor(geometry.rows, geometry.hy(), spec.lengthscale)),
      scale_(spec.amplitude * geometry.cell_area()) {
  geometry.validate();
  spec.validate();
}

GridField GridConvolver::apply(const GridField& field) const {
  if (field.rows() != geometry_.rows || field.cols() != geometry_.cols) {
    throw InvalidInput("convolve_grid: field does not match grid geometry");
  }
  GridField out = scale_ * (along_y_ * field * along_x_);
  return out;
}

GridVectorField GridConvolver::apply(const GridVectorField& field) const {
  return {apply(field.x), apply(field.y)};
}

GridVectorField convolve_grid(const GridVectorField& momentum_field,
                              const GridGeometry& geometry, const KernelSpec& spec) {
  if (!momentum_field.x.allFinite() || !momentum_field.y.allFinite()) {
    throw InvalidInput("convolve_grid: momentum field is not finite");
  }
  return GridConvolver(geometry, spec).apply(momentum_field);
}

}  // namespace diffcal
