#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <functional>
#include <variant>

#include "diffcal/kernels.hpp"

namespace diffcal {

struct LandmarkShape {
  PointSet points;
};

struct GridImage {
  GridGeometry geometry;
  GridField values;
};

// Ordered polyline. Deforms through its vertices; compared as a current.
struct CurveShape {
  PointSet vertices;
};

using Shape = std::variant<LandmarkShape, GridImage, CurveShape>;

enum class ShapeKind { Landmarks, Image, Curve };

ShapeKind kind_of(const Shape& shape);
const char* kind_name(ShapeKind kind);

// Throws InvalidInput when a shape breaks its representation invariants.
void validate(const Shape& shape);

// Degrees of freedom of the state q, flattened: point shapes give the
// row-major n x d coordinates, images the row-major pixel values.
Eigen::Index dof_count(const Shape& shape);
Eigen::VectorXd dofs(const Shape& shape);
Shape with_dofs(const Shape& like, const Eigen::VectorXd& flat);

// Points (landmarks or curve vertices) of a point-based shape.
const PointSet& points_of(const Shape& shape);

struct CurrentEmbedding {
  PointSet centers;   // segment midpoints
  PointSet tangents;  // vertices[i + 1] - vertices[i]
};

CurrentEmbedding embed_current(const CurveShape& curve);

// Inner product of two currents under the kernel k_W.
double current_inner(const CurrentEmbedding& a, const CurrentEmbedding& b,
                     const KernelSpec& kernel);

enum class MatchKind { L2Landmarks, L2Image, CurrentMMD };

struct MatchSpec {
  MatchKind kind = MatchKind::L2Landmarks;
  KernelSpec current_kernel{};  // CurrentMMD only
  double weight = 1.0;          // lambda, multiplies C in the shooting loss

  void validate() const;
};

MatchKind default_match_kind(ShapeKind kind);

struct MatchResult {
  double cost = 0.0;
  Eigen::VectorXd gradient;  // d cost / d dofs(q1)
};

// Unweighted matching functional C(q1, q2) and its exact gradient in q1.
MatchResult match_cost(const Shape& q1, const Shape& q2, const MatchSpec& spec);

// Second-order finite differences on a cell-centred grid: central in the
// interior, one-sided second order on the boundary rows/columns.
class GridDifferences {
 public:
  explicit GridDifferences(const GridGeometry& geometry);

  GridField ddx(const GridField& f) const { return f * dx_.transpose(); }
  GridField ddy(const GridField& f) const { return dy_ * f; }
  // Transposes of the two operators above.
  GridField ddx_t(const GridField& f) const { return f * dx_; }
  GridField ddy_t(const GridField& f) const { return dy_.transpose() * f; }

 private:
  Eigen::SparseMatrix<double> dx_;  // cols x cols, acts along a row
  Eigen::SparseMatrix<double> dy_;  // rows x rows, acts along a column
};

GridVectorField image_gradient(const GridImage& image);

using VelocityAccessor = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// xi_q v: how a velocity field moves the shape, in dofs(q) layout.
Eigen::VectorXd infinitesimal_action(const Shape& q, const VelocityAccessor& v);
// Image overload with the velocity already sampled on the pixel centres.
Eigen::VectorXd infinitesimal_action(const GridImage& q, const GridVectorField& v);

// xi_q^* pi: momentum density paired with velocity fields. Point shapes carry
// their momenta at the points; images give the vector field -pi grad q.
using MomentumDensity = std::variant<PointSet, GridVectorField>;
MomentumDensity dual_action(const Shape& q, const Eigen::VectorXd& momentum);

// Maps a function graph (t, y) into [0, 1]^2 with the given axis bounds.
CurveShape curve_from_graph(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                            double t_min, double t_max, double y_min, double y_max);

}  // namespace diffcal
