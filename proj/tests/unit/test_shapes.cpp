#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "diffcal/error.hpp"
#include "diffcal/shapes.hpp"
#include "test_helpers.hpp"

namespace diffcal {
namespace {

using testing::central_difference;
using testing::random_curve;
using testing::random_points;
using testing::random_smooth_image;
using testing::relative_error;

const KernelSpec kCurrentKernel{KernelFamily::Gaussian, 0.2, 1.0};

MatchSpec spec_for(MatchKind kind) {
  MatchSpec s;
  s.kind = kind;
  s.current_kernel = kCurrentKernel;
  return s;
}

double cost_at(const Shape& like, const Eigen::VectorXd& x, const Shape& other,
               const MatchSpec& spec) {
  return match_cost(with_dofs(like, x), other, spec).cost;
}

TEST(MatchCost, IdenticalShapesGiveZero) {
  std::mt19937_64 rng(1);
  const Shape lm = LandmarkShape{random_points(rng, 5, 2)};
  const Shape img = random_smooth_image(rng, 8);
  const Shape crv = random_curve(rng, 10);
  for (const auto& [shape, kind] :
       {std::pair{lm, MatchKind::L2Landmarks}, std::pair{img, MatchKind::L2Image},
        std::pair{crv, MatchKind::CurrentMMD}, std::pair{crv, MatchKind::L2Landmarks}}) {
    const MatchResult r = match_cost(shape, shape, spec_for(kind));
    EXPECT_NEAR(r.cost, 0.0, 1e-14);
    EXPECT_LT(r.gradient.norm(), 1e-12);
  }
}

TEST(MatchCost, SingleLandmarkClosedForm) {
  PointSet x(1, 2), y(1, 2);
  x << 0.0, 0.0;
  y << 2.0, 0.0;
  const MatchResult r = match_cost(LandmarkShape{x}, LandmarkShape{y}, MatchSpec{});
  EXPECT_DOUBLE_EQ(r.cost, 4.0);
  EXPECT_DOUBLE_EQ(r.gradient(0), -4.0);
  EXPECT_DOUBLE_EQ(r.gradient(1), 0.0);
}

TEST(MatchCost, ImageCostIsAreaWeighted) {
  GridGeometry g{4, 4, 0.0, 0.0, 2.0, 1.0};
  GridImage a{g, GridField::Zero(4, 4)};
  GridImage b{g, GridField::Constant(4, 4, 0.5)};
  const MatchResult r = match_cost(a, b, spec_for(MatchKind::L2Image));
  // integral of 0.25 over a 2 x 1 box
  EXPECT_NEAR(r.cost, 0.5, 1e-15);
}

TEST(MatchCost, CurrentGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  const MatchSpec spec = spec_for(MatchKind::CurrentMMD);
  for (int trial = 0; trial < 5; ++trial) {
    const Shape a = random_curve(rng, 10);
    const Shape b = random_curve(rng, 10);
    const MatchResult r = match_cost(a, b, spec);
    const Eigen::VectorXd fd = central_difference(
        [&](const Eigen::VectorXd& x) { return cost_at(a, x, b, spec); }, dofs(a), 1e-6);
    EXPECT_LT(relative_error(r.gradient, fd), 1e-6);
  }
}

TEST(MatchCost, AllGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const Shape la = LandmarkShape{random_points(rng, 6, 3)};
    const Shape lb = LandmarkShape{random_points(rng, 6, 3)};
    const Shape ia = random_smooth_image(rng, 6);
    const Shape ib = random_smooth_image(rng, 6);
    const Shape ca = random_curve(rng, 7);
    const Shape cb = random_curve(rng, 12);  // different vertex count
    for (const auto& [a, b, kind] :
         {std::tuple{la, lb, MatchKind::L2Landmarks}, std::tuple{ia, ib, MatchKind::L2Image},
          std::tuple{ca, cb, MatchKind::CurrentMMD}}) {
      const MatchSpec spec = spec_for(kind);
      const Eigen::VectorXd fd = central_difference(
          [&](const Eigen::VectorXd& x) { return cost_at(a, x, b, spec); }, dofs(a), 1e-5);
      EXPECT_LT(relative_error(match_cost(a, b, spec).gradient, fd), 1e-5);
    }
  }
}

TEST(MatchCost, SymmetricAndNonNegative) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Shape la = LandmarkShape{random_points(rng, 4, 2)};
    const Shape lb = LandmarkShape{random_points(rng, 4, 2)};
    const Shape ia = random_smooth_image(rng, 6);
    const Shape ib = random_smooth_image(rng, 6);
    const Shape ca = random_curve(rng, 6);
    const Shape cb = random_curve(rng, 9);
    for (const auto& [a, b, kind] :
         {std::tuple{la, lb, MatchKind::L2Landmarks}, std::tuple{ia, ib, MatchKind::L2Image},
          std::tuple{ca, cb, MatchKind::CurrentMMD}}) {
      const double ab = match_cost(a, b, spec_for(kind)).cost;
      const double ba = match_cost(b, a, spec_for(kind)).cost;
      EXPECT_GT(ab, 0.0);
      EXPECT_NEAR(ab, ba, 1e-13 * std::max(1.0, ab));
    }
  }
}

TEST(MatchCost, CurrentInvariantUnderCollinearRefinement) {
  // Segments are short relative to the kernel lengthscale (ratio 0.1), the
  // regime in which the midpoint current is additive to ~(l/sigma)^4.
  const KernelSpec k{KernelFamily::Gaussian, 1.0, 1.0};
  MatchSpec spec = spec_for(MatchKind::CurrentMMD);
  spec.current_kernel = k;
  CurveShape coarse{PointSet(4, 2)};
  coarse.vertices << 0.0, 0.0, 0.1, 0.0, 0.15, 0.08, 0.2, 0.1;
  CurveShape fine{PointSet(5, 2)};
  fine.vertices << 0.0, 0.0, 0.05, 0.0, 0.1, 0.0, 0.15, 0.08, 0.2, 0.1;
  const double refinement_gap = match_cost(coarse, fine, spec).cost;
  EXPECT_LT(refinement_gap, 1e-8);

  CurveShape other{PointSet(3, 2)};
  other.vertices << 0.0, 0.3, 0.1, 0.2, 0.2, 0.35;
  const double d_coarse = match_cost(coarse, other, spec).cost;
  const double d_fine = match_cost(fine, other, spec).cost;
  // Distances to any other current move by at most the refinement gap.
  EXPECT_LE(std::abs(std::sqrt(d_coarse) - std::sqrt(d_fine)),
            std::sqrt(refinement_gap) + 1e-12);
}

TEST(MatchCost, RepresentationAndGridMismatch) {
  std::mt19937_64 rng(2);
  const Shape lm = LandmarkShape{random_points(rng, 3, 2)};
  const Shape img = random_smooth_image(rng, 8);
  const Shape img2 = random_smooth_image(rng, 6);
  EXPECT_THROW(match_cost(lm, img, MatchSpec{}), InvalidInput);
  EXPECT_THROW(match_cost(img, img2, spec_for(MatchKind::L2Image)), InvalidInput);
  EXPECT_THROW(match_cost(lm, LandmarkShape{random_points(rng, 4, 2)}, MatchSpec{}),
               InvalidInput);
}

TEST(ShapeValidation, CurveInvariants) {
  CurveShape c{PointSet(3, 2)};
  c.vertices << 0.0, 0.0, 0.0, 0.0, 1.0, 1.0;
  EXPECT_THROW(validate(c), InvalidInput);
  CurveShape single{PointSet(1, 2)};
  single.vertices << 0.0, 0.0;
  EXPECT_THROW(validate(single), InvalidInput);
  GridImage img{GridGeometry{1, 4, 0, 0, 1, 1}, GridField::Zero(1, 4)};
  EXPECT_THROW(validate(img), InvalidInput);
}

TEST(CurrentEmbedding, CentersAndTangents) {
  CurveShape c{PointSet(3, 2)};
  c.vertices << 0.0, 0.0, 1.0, 0.0, 1.0, 2.0;
  const CurrentEmbedding e = embed_current(c);
  EXPECT_EQ(e.centers.rows(), 2);
  EXPECT_DOUBLE_EQ(e.centers(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(e.centers(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(e.tangents(1, 1), 2.0);
}

GridImage ramp(int n, bool along_x) {
  GridImage img{GridGeometry{n, n, 0.0, 0.0, 1.0, 1.0}, GridField(n, n)};
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      img.values(r, c) = along_x ? img.geometry.x_center(c) : img.geometry.y_center(r);
  return img;
}

TEST(InfinitesimalAction, ZeroVelocity) {
  std::mt19937_64 rng(4);
  const VelocityAccessor zero = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd::Zero(x.size()).eval();
  };
  EXPECT_EQ(infinitesimal_action(LandmarkShape{random_points(rng, 4, 2)}, zero).norm(), 0.0);
  EXPECT_EQ(infinitesimal_action(random_smooth_image(rng, 8), zero).norm(), 0.0);
}

TEST(InfinitesimalAction, ConstantImageDoesNotMove) {
  GridImage img{GridGeometry{6, 6, 0, 0, 1, 1}, GridField::Constant(6, 6, 0.7)};
  const VelocityAccessor v = [](const Eigen::VectorXd& x) {
    return Eigen::Vector2d(std::sin(x(0)), x(1)).eval();
  };
  EXPECT_LT(infinitesimal_action(img, v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(InfinitesimalAction, RampAdvection) {
  const GridImage img = ramp(10, true);
  const VelocityAccessor v = [](const Eigen::VectorXd&) { return Eigen::Vector2d(1, 0).eval(); };
  const Eigen::VectorXd t = infinitesimal_action(img, v);
  // Second-order stencils are exact on linear data, boundary included.
  EXPECT_LT((t.array() + 1.0).abs().maxCoeff(), 1e-12);
}

TEST(InfinitesimalAction, LandmarksSampleVelocity) {
  PointSet p(2, 2);
  p << 0.0, 1.0, 2.0, 3.0;
  const VelocityAccessor v = [](const Eigen::VectorXd& x) { return (2.0 * x).eval(); };
  const Eigen::VectorXd t = infinitesimal_action(LandmarkShape{p}, v);
  EXPECT_DOUBLE_EQ(t(3), 6.0);
}

TEST(DualAction, ZeroMomentum) {
  const GridImage img = ramp(6, false);
  const auto m = std::get<GridVectorField>(dual_action(img, Eigen::VectorXd::Zero(36)));
  EXPECT_EQ(m.x.norm() + m.y.norm(), 0.0);
}

TEST(DualAction, VerticalRampUnitMomentum) {
  const int n = 8;
  const GridImage img = ramp(n, false);
  const auto m = std::get<GridVectorField>(dual_action(img, Eigen::VectorXd::Ones(n * n)));
  for (int r = 1; r < n - 1; ++r)
    for (int c = 1; c < n - 1; ++c) {
      EXPECT_NEAR(m.x(r, c), 0.0, 1e-12);
      EXPECT_NEAR(m.y(r, c), -1.0, 1e-12);
    }
}

TEST(DualAction, PairingDuality) {
  std::mt19937_64 rng(8);
  const int n = 10;
  const GridImage img = random_smooth_image(rng, n);
  const double area = img.geometry.cell_area();
  const Eigen::VectorXd pi = testing::random_vector(rng, n * n);
  const auto m = std::get<GridVectorField>(dual_action(img, pi));
  for (int trial = 0; trial < 5; ++trial) {
    // velocity supported in the interior
    GridVectorField v{GridField::Zero(n, n), GridField::Zero(n, n)};
    const Eigen::VectorXd rv = testing::random_vector(rng, 2 * (n - 2) * (n - 2));
    v.x.block(1, 1, n - 2, n - 2) = Eigen::Map<const GridField>(rv.data(), n - 2, n - 2);
    v.y.block(1, 1, n - 2, n - 2) =
        Eigen::Map<const GridField>(rv.data() + (n - 2) * (n - 2), n - 2, n - 2);
    const double lhs = area * (m.x.cwiseProduct(v.x).sum() + m.y.cwiseProduct(v.y).sum());
    const double rhs = area * pi.dot(infinitesimal_action(img, v));
    EXPECT_LT(std::abs(lhs - rhs), 1e-10 * std::abs(rhs));
  }
}

TEST(DualAction, PointShapesReshape) {
  PointSet p(2, 3);
  p.setZero();
  Eigen::VectorXd pi(6);
  pi << 1, 2, 3, 4, 5, 6;
  const auto m = std::get<PointSet>(dual_action(LandmarkShape{p}, pi));
  EXPECT_DOUBLE_EQ(m(1, 0), 4.0);
  EXPECT_THROW(dual_action(LandmarkShape{p}, Eigen::VectorXd::Zero(5)), InvalidInput);
}

TEST(CurveFromGraph, NormalisesToUnitSquare) {
  Eigen::VectorXd t(3), y(3);
  t << 0.0, 5.0, 10.0;
  y << -1.0, 0.0, 3.0;
  const CurveShape c = curve_from_graph(t, y, 0.0, 10.0, -1.0, 3.0);
  EXPECT_DOUBLE_EQ(c.vertices(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(c.vertices(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(c.vertices(1, 1), 0.25);
}

}  // namespace
}  // namespace diffcal
