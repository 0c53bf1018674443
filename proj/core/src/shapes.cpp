#include "diffcal/shapes.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

constexpr double kMinSegmentLength = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Eigen::SparseMatrix<double> difference_operator(int n, double h) {
  std::vector<Eigen::Triplet<double>> t;
  if (n == 2) {
    for (int r = 0; r < 2; ++r) {
      t.emplace_back(r, 0, -1.0 / h);
      t.emplace_back(r, 1, 1.0 / h);
    }
  } else {
    const double c = 1.0 / (2.0 * h);
    t.emplace_back(0, 0, -3.0 * c);
    t.emplace_back(0, 1, 4.0 * c);
    t.emplace_back(0, 2, -1.0 * c);
    for (int r = 1; r < n - 1; ++r) {
      t.emplace_back(r, r - 1, -c);
      t.emplace_back(r, r + 1, c);
    }
    t.emplace_back(n - 1, n - 3, 1.0 * c);
    t.emplace_back(n - 1, n - 2, -4.0 * c);
    t.emplace_back(n - 1, n - 1, 3.0 * c);
  }
  Eigen::SparseMatrix<double> d(n, n);
  d.setFromTriplets(t.begin(), t.end());
  return d;
}

void require_same_kind(const Shape& a, const Shape& b) {
  if (a.index() != b.index()) {
    throw InvalidInput(std::string("representation mismatch: ") + kind_name(kind_of(a)) +
                       " vs " + kind_name(kind_of(b)));
  }
}

// Gradient of <mu_a, mu_b> with respect to the centres and tangents of a.
void accumulate_current_gradient(const CurrentEmbedding& a, const CurrentEmbedding& b,
                                 const KernelSpec& kernel, double factor,
                                 PointSet& grad_centers, PointSet& grad_tangents) {
  for (Eigen::Index i = 0; i < a.centers.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.centers.rows(); ++j) {
      const Eigen::RowVectorXd diff = a.centers.row(i) - b.centers.row(j);
      const double r2 = diff.squaredNorm();
      const double dot = a.tangents.row(i).dot(b.tangents.row(j));
      grad_tangents.row(i) += factor * kernel(r2) * b.tangents.row(j);
      grad_centers.row(i) += factor * 2.0 * kernel.derivative(r2) * dot * diff;
    }
  }
}

MatchResult landmark_l2(const PointSet& x, const PointSet& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw InvalidInput("L2 landmark matching needs equal point counts and dimensions");
  }
  const double n = static_cast<double>(x.rows());
  const PointSet diff = x - y;
  MatchResult out;
  out.cost = diff.squaredNorm() / n;
  PointSet g = (2.0 / n) * diff;
  out.gradient = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  return out;
}

MatchResult image_l2(const GridImage& a, const GridImage& b) {
  if (!(a.geometry == b.geometry)) {
    throw InvalidInput("L2 image matching needs identical grids");
  }
  const double area = a.geometry.cell_area();
  const GridField diff = a.values - b.values;
  MatchResult out;
  out.cost = area * diff.squaredNorm();
  GridField g = (2.0 * area) * diff;
  out.gradient = Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
  return out;
}

MatchResult current_mmd(const CurveShape& a, const CurveShape& b, const KernelSpec& kernel) {
  if (a.vertices.cols() != b.vertices.cols()) {
    throw InvalidInput("current matching needs curves of equal ambient dimension");
  }
  const CurrentEmbedding ea = embed_current(a);
  const CurrentEmbedding eb = embed_current(b);
  MatchResult out;
  out.cost = current_inner(ea, ea, kernel) - 2.0 * current_inner(ea, eb, kernel) +
             current_inner(eb, eb, kernel);
  // Rounding can push the difference of nearly equal currents below zero.
  out.cost = std::max(out.cost, 0.0);

  PointSet gc = PointSet::Zero(ea.centers.rows(), ea.centers.cols());
  PointSet gt = PointSet::Zero(ea.centers.rows(), ea.centers.cols());
  accumulate_current_gradient(ea, ea, kernel, 2.0, gc, gt);
  accumulate_current_gradient(ea, eb, kernel, -2.0, gc, gt);

  PointSet gv = PointSet::Zero(a.vertices.rows(), a.vertices.cols());
  for (Eigen::Index i = 0; i < gc.rows(); ++i) {
    gv.row(i) += 0.5 * gc.row(i) - gt.row(i);
    gv.row(i + 1) += 0.5 * gc.row(i) + gt.row(i);
  }
  out.gradient = Eigen::Map<const Eigen::VectorXd>(gv.data(), gv.size());
  return out;
}

}  // namespace

ShapeKind kind_of(const Shape& shape) {
  return std::visit(overloaded{[](const LandmarkShape&) { return ShapeKind::Landmarks; },
                               [](const GridImage&) { return ShapeKind::Image; },
                               [](const CurveShape&) { return ShapeKind::Curve; }},
                    shape);
}

const char* kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Landmarks:
      return "landmarks";
    case ShapeKind::Image:
      return "image";
    case ShapeKind::Curve:
      return "curve";
  }
  return "unknown";
}

void validate(const Shape& shape) {
  std::visit(
      overloaded{
          [](const LandmarkShape& s) {
            if (s.points.rows() < 1) throw InvalidInput("landmark shape has no points");
            if (s.points.cols() < 1 || s.points.cols() > 3)
              throw InvalidInput("landmark dimension must be 1, 2 or 3");
            if (!s.points.allFinite()) throw InvalidInput("landmark coordinates not finite");
          },
          [](const GridImage& s) {
            s.geometry.validate();
            if (s.values.rows() != s.geometry.rows || s.values.cols() != s.geometry.cols)
              throw InvalidInput("image values do not match grid geometry");
            if (!s.values.allFinite()) throw InvalidInput("image values not finite");
          },
          [](const CurveShape& s) {
            if (s.vertices.rows() < 2) throw InvalidInput("curve needs at least 2 vertices");
            if (s.vertices.cols() < 1 || s.vertices.cols() > 3)
              throw InvalidInput("curve dimension must be 1, 2 or 3");
            if (!s.vertices.allFinite()) throw InvalidInput("curve vertices not finite");
            for (Eigen::Index i = 0; i + 1 < s.vertices.rows(); ++i) {
              if ((s.vertices.row(i + 1) - s.vertices.row(i)).norm() <= kMinSegmentLength)
                throw InvalidInput("curve has coincident consecutive vertices at index " +
                                   std::to_string(i));
            }
          }},
      shape);
}

Eigen::Index dof_count(const Shape& shape) {
  return std::visit(overloaded{[](const LandmarkShape& s) { return s.points.size(); },
                               [](const GridImage& s) { return s.values.size(); },
                               [](const CurveShape& s) { return s.vertices.size(); }},
                    shape);
}

Eigen::VectorXd dofs(const Shape& shape) {
  return std::visit(
      overloaded{[](const LandmarkShape& s) -> Eigen::VectorXd {
                   return Eigen::Map<const Eigen::VectorXd>(s.points.data(), s.points.size());
                 },
                 [](const GridImage& s) -> Eigen::VectorXd {
                   return Eigen::Map<const Eigen::VectorXd>(s.values.data(), s.values.size());
                 },
                 [](const CurveShape& s) -> Eigen::VectorXd {
                   return Eigen::Map<const Eigen::VectorXd>(s.vertices.data(),
                                                            s.vertices.size());
                 }},
      shape);
}

Shape with_dofs(const Shape& like, const Eigen::VectorXd& flat) {
  if (flat.size() != dof_count(like)) {
    throw InvalidInput("with_dofs: expected " + std::to_string(dof_count(like)) +
                       " values, got " + std::to_string(flat.size()));
  }
  return std::visit(
      overloaded{[&](const LandmarkShape& s) -> Shape {
                   return LandmarkShape{Eigen::Map<const PointSet>(
                       flat.data(), s.points.rows(), s.points.cols())};
                 },
                 [&](const GridImage& s) -> Shape {
                   return GridImage{s.geometry, Eigen::Map<const GridField>(
                                                    flat.data(), s.values.rows(),
                                                    s.values.cols())};
                 },
                 [&](const CurveShape& s) -> Shape {
                   return CurveShape{Eigen::Map<const PointSet>(
                       flat.data(), s.vertices.rows(), s.vertices.cols())};
                 }},
      like);
}

const PointSet& points_of(const Shape& shape) {
  if (const auto* l = std::get_if<LandmarkShape>(&shape)) return l->points;
  if (const auto* c = std::get_if<CurveShape>(&shape)) return c->vertices;
  throw UnsupportedRepresentation("images have no point set");
}

CurrentEmbedding embed_current(const CurveShape& curve) {
  const Eigen::Index m = curve.vertices.rows();
  if (m < 2) throw InvalidInput("curve needs at least 2 vertices");
  CurrentEmbedding e;
  const auto head = curve.vertices.topRows(m - 1);
  const auto tail = curve.vertices.bottomRows(m - 1);
  e.centers = 0.5 * (head + tail);
  e.tangents = tail - head;
  return e;
}

double current_inner(const CurrentEmbedding& a, const CurrentEmbedding& b,
                     const KernelSpec& kernel) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.centers.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.centers.rows(); ++j) {
      s += kernel((a.centers.row(i) - b.centers.row(j)).squaredNorm()) *
           a.tangents.row(i).dot(b.tangents.row(j));
    }
  }
  return s;
}

void MatchSpec::validate() const {
  if (!(weight > 0.0) || !std::isfinite(weight)) {
    throw InvalidInput("matching weight must be positive");
  }
  if (kind == MatchKind::CurrentMMD) current_kernel.validate();
}

MatchKind default_match_kind(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Image:
      return MatchKind::L2Image;
    case ShapeKind::Curve:
      return MatchKind::CurrentMMD;
    case ShapeKind::Landmarks:
      break;
  }
  return MatchKind::L2Landmarks;
}

MatchResult match_cost(const Shape& q1, const Shape& q2, const MatchSpec& spec) {
  require_same_kind(q1, q2);
  switch (spec.kind) {
    case MatchKind::L2Landmarks:
      return landmark_l2(points_of(q1), points_of(q2));
    case MatchKind::L2Image: {
      const auto* a = std::get_if<GridImage>(&q1);
      if (a == nullptr) throw InvalidInput("L2 image matching needs image shapes");
      return image_l2(*a, std::get<GridImage>(q2));
    }
    case MatchKind::CurrentMMD: {
      const auto* a = std::get_if<CurveShape>(&q1);
      if (a == nullptr) throw InvalidInput("current matching needs curve shapes");
      return current_mmd(*a, std::get<CurveShape>(q2), spec.current_kernel);
    }
  }
  throw InvalidInput("unknown matching kind");
}

GridDifferences::GridDifferences(const GridGeometry& geometry)
    : dx_(difference_operator(geometry.cols, geometry.hx())),
      dy_(difference_operator(geometry.rows, geometry.hy())) {}

GridVectorField image_gradient(const GridImage& image) {
  const GridDifferences d(image.geometry);
  return {d.ddx(image.values), d.ddy(image.values)};
}

Eigen::VectorXd infinitesimal_action(const Shape& q, const VelocityAccessor& v) {
  if (const auto* img = std::get_if<GridImage>(&q)) {
    const GridGeometry& g = img->geometry;
    GridVectorField sampled{GridField(g.rows, g.cols), GridField(g.rows, g.cols)};
    Eigen::VectorXd x(2);
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        x << g.x_center(c), g.y_center(r);
        const Eigen::VectorXd vel = v(x);
        sampled.x(r, c) = vel(0);
        sampled.y(r, c) = vel(1);
      }
    }
    return infinitesimal_action(*img, sampled);
  }
  const PointSet& pts = points_of(q);
  PointSet out(pts.rows(), pts.cols());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out.row(i) = v(pts.row(i).transpose()).transpose();
  }
  return Eigen::Map<const Eigen::VectorXd>(out.data(), out.size());
}

Eigen::VectorXd infinitesimal_action(const GridImage& q, const GridVectorField& v) {
  const GridVectorField grad = image_gradient(q);
  const GridField t = -(grad.x.cwiseProduct(v.x) + grad.y.cwiseProduct(v.y));
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

MomentumDensity dual_action(const Shape& q, const Eigen::VectorXd& momentum) {
  if (momentum.size() != dof_count(q)) {
    throw InvalidInput("dual_action: momentum layout does not match the shape");
  }
  if (const auto* img = std::get_if<GridImage>(&q)) {
    const GridVectorField grad = image_gradient(*img);
    const Eigen::Map<const GridField> pi(momentum.data(), img->values.rows(),
                                         img->values.cols());
    return GridVectorField{-pi.cwiseProduct(grad.x), -pi.cwiseProduct(grad.y)};
  }
  const PointSet& pts = points_of(q);
  return PointSet(Eigen::Map<const PointSet>(momentum.data(), pts.rows(), pts.cols()));
}

CurveShape curve_from_graph(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                            double t_min, double t_max, double y_min, double y_max) {
  if (t.size() != y.size() || t.size() < 2) {
    throw InvalidInput("function graph needs at least 2 (t, y) samples of equal length");
  }
  if (!(t_max > t_min) || !(y_max > y_min)) {
    throw InvalidInput("function graph normalisation bounds are degenerate");
  }
  CurveShape c{PointSet(t.size(), 2)};
  c.vertices.col(0) = (t.array() - t_min) / (t_max - t_min);
  c.vertices.col(1) = (y.array() - y_min) / (y_max - y_min);
  return c;
}

}  // namespace diffcal
