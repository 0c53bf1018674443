#include "diffcal/hamiltonian_system.hpp"

#include <cmath>
#include <limits>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

class PointSystem final : public HamiltonianSystem {
 public:
  PointSystem(Eigen::Index n, Eigen::Index d, const KernelSpec& kernel)
      : n_(n), d_(d), kernel_(kernel),
        inv_l2_(1.0 / (kernel.lengthscale * kernel.lengthscale)) {}

  double energy(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const PointSet P = points(pi);
    return 0.5 * (gram(q).array() * (P * P.transpose()).array()).sum();
  }

  // With W_ij = k(|q_i - q_j|^2) and M = W o (P P^T):
  //   dq = W P,  dpi_i = c sum_j M_ij (q_i - q_j),  c = 1 / l^2.
  PhasePair fields(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const PointSet Q = points(q);
    const PointSet P = points(pi);
    const Eigen::MatrixXd W = gram(q);
    const Eigen::MatrixXd M = W.cwiseProduct(P * P.transpose());
    const PointSet dq = W * P;
    const PointSet dp = inv_l2_ * (M.rowwise().sum().asDiagonal() * Q - M * Q);
    return {flatten(dq), flatten(dp)};
  }

  PhasePair vjp(const Eigen::VectorXd& q, const Eigen::VectorXd& pi,
                const Eigen::VectorXd& cot_dq,
                const Eigen::VectorXd& cot_dpi) const override {
    const PointSet Q = points(q);
    const PointSet P = points(pi);
    const PointSet AF = points(cot_dq);
    const PointSet AG = points(cot_dpi);
    const Eigen::MatrixXd W = gram(q);
    const Eigen::MatrixXd S = P * P.transpose();
    const Eigen::MatrixXd M = W.cwiseProduct(S);

    // dq = W P
    PointSet cp = W * AF;
    Eigen::MatrixXd cot_w = AF * P.transpose();
    // dpi: explicit dependence on q_i - q_j, then through M
    PointSet cq = inv_l2_ * (M.rowwise().sum().asDiagonal() * AG - M * AG);
    const Eigen::VectorXd g = AG.cwiseProduct(Q).rowwise().sum();
    const Eigen::MatrixXd cot_m =
        inv_l2_ * (g.replicate(1, n_) - AG * Q.transpose());
    cot_w += cot_m.cwiseProduct(S);
    const Eigen::MatrixXd cot_s = cot_m.cwiseProduct(W);
    cp += (cot_s + cot_s.transpose()) * P;
    // dW_ij / dq_i = -c W_ij (q_i - q_j)
    const Eigen::MatrixXd T = cot_w.cwiseProduct(W);
    const Eigen::MatrixXd U = T + T.transpose();
    cq -= inv_l2_ * (U.rowwise().sum().asDiagonal() * Q - U * Q);
    return {flatten(cq), flatten(cp)};
  }

  Eigen::VectorXd velocity(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const PointSet v = gram(q) * points(pi);
    return flatten(v);
  }

  double pairing_weight() const override { return 1.0; }

  double max_speed(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const Eigen::VectorXd v = velocity(q, pi);
    return Eigen::Map<const PointSet>(v.data(), n_, d_).rowwise().norm().maxCoeff();
  }

  double min_spacing() const override { return std::numeric_limits<double>::infinity(); }

 private:
  // No input checks: non-finite states must surface as integration failures.
  Eigen::MatrixXd gram(const Eigen::VectorXd& q) const {
    const PointSet Q = points(q);
    const Eigen::VectorXd sq = Q.rowwise().squaredNorm();
    Eigen::MatrixXd d2 = (-2.0 * Q * Q.transpose()).colwise() + sq;
    d2.rowwise() += sq.transpose();
    return d2.cwiseMax(0.0).unaryExpr([this](double r2) { return kernel_(r2); });
  }
  Eigen::Map<const PointSet> points(const Eigen::VectorXd& flat) const {
    return Eigen::Map<const PointSet>(flat.data(), n_, d_);
  }
  static Eigen::VectorXd flatten(const PointSet& p) {
    return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size());
  }

  Eigen::Index n_;
  Eigen::Index d_;
  KernelSpec kernel_;
  double inv_l2_;
};

class ImageSystem final : public HamiltonianSystem {
 public:
  ImageSystem(const GridGeometry& geometry, const KernelSpec& kernel)
      : geometry_(geometry), conv_(geometry, kernel), diff_(geometry),
        area_(geometry.cell_area()) {}

  double energy(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const Intermediates in = forward(q, pi);
    return 0.5 * area_ *
           (in.mx.cwiseProduct(in.vx).sum() + in.my.cwiseProduct(in.vy).sum());
  }

  PhasePair fields(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const Intermediates in = forward(q, pi);
    const auto P = field(pi);
    const GridField dq = -(in.gx.cwiseProduct(in.vx) + in.gy.cwiseProduct(in.vy));
    const GridField dp =
        diff_.ddx_t(P.cwiseProduct(in.vx)) + diff_.ddy_t(P.cwiseProduct(in.vy));
    return {flatten(dq), flatten(dp)};
  }

  PhasePair vjp(const Eigen::VectorXd& q, const Eigen::VectorXd& pi,
                const Eigen::VectorXd& cot_dq,
                const Eigen::VectorXd& cot_dpi) const override {
    const Intermediates in = forward(q, pi);
    const auto P = field(pi);
    const auto AF = field(cot_dq);
    const auto AG = field(cot_dpi);

    // dpi/dt = Dx^T (pi vx) + Dy^T (pi vy)
    const GridField ex = diff_.ddx(AG);
    const GridField ey = diff_.ddy(AG);
    // dq/dt = -(gx vx + gy vy)
    const GridField cvx = -AF.cwiseProduct(in.gx) + ex.cwiseProduct(P);
    const GridField cvy = -AF.cwiseProduct(in.gy) + ey.cwiseProduct(P);
    GridField cgx = -AF.cwiseProduct(in.vx);
    GridField cgy = -AF.cwiseProduct(in.vy);
    GridField cp = ex.cwiseProduct(in.vx) + ey.cwiseProduct(in.vy);

    // v = K m, K symmetric; m = -pi g
    const GridField bx = conv_.apply(cvx);
    const GridField by = conv_.apply(cvy);
    cp -= bx.cwiseProduct(in.gx) + by.cwiseProduct(in.gy);
    cgx -= bx.cwiseProduct(P);
    cgy -= by.cwiseProduct(P);

    const GridField cq = diff_.ddx_t(cgx) + diff_.ddy_t(cgy);
    return {flatten(cq), flatten(cp)};
  }

  Eigen::VectorXd velocity(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const Intermediates in = forward(q, pi);
    Eigen::VectorXd out(2 * in.vx.size());
    out.head(in.vx.size()) = flatten(in.vx);
    out.tail(in.vy.size()) = flatten(in.vy);
    return out;
  }

  double pairing_weight() const override { return area_; }

  double max_speed(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const override {
    const Intermediates in = forward(q, pi);
    return (in.vx.array().square() + in.vy.array().square()).sqrt().maxCoeff();
  }

  double min_spacing() const override { return std::min(geometry_.hx(), geometry_.hy()); }

 private:
  struct Intermediates {
    GridField gx, gy, mx, my, vx, vy;
  };

  Eigen::Map<const GridField> field(const Eigen::VectorXd& flat) const {
    return Eigen::Map<const GridField>(flat.data(), geometry_.rows, geometry_.cols);
  }
  static Eigen::VectorXd flatten(const GridField& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
  }

  Intermediates forward(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const {
    const auto Q = field(q);
    const auto P = field(pi);
    Intermediates in;
    in.gx = diff_.ddx(Q);
    in.gy = diff_.ddy(Q);
    in.mx = -P.cwiseProduct(in.gx);
    in.my = -P.cwiseProduct(in.gy);
    in.vx = conv_.apply(in.mx);
    in.vy = conv_.apply(in.my);
    return in;
  }

  GridGeometry geometry_;
  GridConvolver conv_;
  GridDifferences diff_;
  double area_;
};

}  // namespace

std::unique_ptr<HamiltonianSystem> make_system(const Shape& shape, const KernelSpec& kernel) {
  kernel.validate();
  if (const auto* img = std::get_if<GridImage>(&shape)) {
    return std::make_unique<ImageSystem>(img->geometry, kernel);
  }
  const PointSet& pts = points_of(shape);
  return std::make_unique<PointSystem>(pts.rows(), pts.cols(), kernel);
}

}  // namespace diffcal
