#include "diffcal/prealign.hpp"

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

void check_params(const RigidParams& p) {
  if (p.dim != 2 && p.dim != 3) throw InvalidInput("rigid transforms need d = 2 or 3");
  if (p.omega.size() != RigidParams::parameter_count(p.dim)) {
    throw InvalidInput("se(d) parameter vector has the wrong length");
  }
  if (!p.omega.allFinite()) throw InvalidInput("se(d) parameters are not finite");
}

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

struct Objective {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

Objective evaluate(const Shape& q_mes, const std::vector<Shape>& dataset,
                   const MatchSpec& match, const RigidParams& params) {
  const Eigen::MatrixXd t = se_exp(params);
  const std::vector<Eigen::MatrixXd> dt = se_exp_jacobian(params);
  const int d = params.dim;
  Objective out;
  out.gradient = Eigen::VectorXd::Zero(params.omega.size());
  Eigen::MatrixXd dcost_dt = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (const Shape& shape : dataset) {
    const Shape moved = apply_rigid(shape, t);
    const MatchResult m = match_cost(moved, q_mes, match);
    out.value += m.cost;
    const PointSet& x = points_of(shape);
    const Eigen::Map<const PointSet> g(m.gradient.data(), x.rows(), d);
    // y_k = T[:d, :d] x_k + T[:d, d]
    dcost_dt.topLeftCorner(d, d) += g.transpose() * x;
    dcost_dt.topRightCorner(d, 1) += g.colwise().sum().transpose();
  }
  for (Eigen::Index l = 0; l < out.gradient.size(); ++l) {
    out.gradient(l) = (dcost_dt.array() * dt[l].array()).sum();
  }
  return out;
}

}  // namespace

RigidParams RigidParams::zero(int dim) {
  return RigidParams{dim, Eigen::VectorXd::Zero(parameter_count(dim))};
}

Eigen::MatrixXd lie_algebra_matrix(const RigidParams& params) {
  check_params(params);
  const int d = params.dim;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d + 1, d + 1);
  if (d == 2) {
    m(0, 1) = -params.omega(0);
    m(1, 0) = params.omega(0);
    m(0, 2) = params.omega(1);
    m(1, 2) = params.omega(2);
  } else {
    m.topLeftCorner(3, 3) = hat(params.omega.head<3>());
    m.topRightCorner(3, 1) = params.omega.tail<3>();
  }
  return m;
}

Eigen::MatrixXd se_exp(const RigidParams& params) {
  check_params(params);
  const int d = params.dim;
  Eigen::MatrixXd t = Eigen::MatrixXd::Identity(d + 1, d + 1);
  if (d == 2) {
    const double th = params.omega(0);
    const double c = std::cos(th), s = std::sin(th);
    // V = [[a, -b], [b, a]] with a = sin(th)/th, b = (1 - cos(th))/th
    double a, b;
    if (std::abs(th) < 1e-6) {
      a = 1.0 - th * th / 6.0;
      b = th / 2.0 - th * th * th / 24.0;
    } else {
      a = s / th;
      b = (1.0 - c) / th;
    }
    t(0, 0) = c;
    t(0, 1) = -s;
    t(1, 0) = s;
    t(1, 1) = c;
    const Eigen::Vector2d v = params.omega.tail<2>();
    t(0, 2) = a * v.x() - b * v.y();
    t(1, 2) = b * v.x() + a * v.y();
    return t;
  }
  const Eigen::Vector3d w = params.omega.head<3>();
  const Eigen::Vector3d v = params.omega.tail<3>();
  const double th2 = w.squaredNorm();
  const double th = std::sqrt(th2);
  double A, B, C;
  if (th < 1e-5) {
    A = 1.0 - th2 / 6.0;
    B = 0.5 - th2 / 24.0;
    C = 1.0 / 6.0 - th2 / 120.0;
  } else {
    A = std::sin(th) / th;
    B = (1.0 - std::cos(th)) / th2;
    C = (th - std::sin(th)) / (th2 * th);
  }
  const Eigen::Matrix3d W = hat(w);
  const Eigen::Matrix3d W2 = W * W;
  t.topLeftCorner(3, 3) = Eigen::Matrix3d::Identity() + A * W + B * W2;
  t.topRightCorner(3, 1) = (Eigen::Matrix3d::Identity() + B * W + C * W2) * v;
  return t;
}

std::vector<Eigen::MatrixXd> se_exp_jacobian(const RigidParams& params) {
  check_params(params);
  const int n = params.dim + 1;
  const Eigen::MatrixXd m = lie_algebra_matrix(params);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(params.omega.size());
  for (Eigen::Index l = 0; l < params.omega.size(); ++l) {
    RigidParams unit = RigidParams::zero(params.dim);
    unit.omega(l) = 1.0;
    // d/de exp(M + e E) is the upper-right block of exp([[M, E], [0, M]]).
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = m;
    block.bottomRightCorner(n, n) = m;
    block.topRightCorner(n, n) = lie_algebra_matrix(unit);
    const Eigen::MatrixXd e = block.exp();
    out.push_back(e.topRightCorner(n, n));
  }
  return out;
}

Shape apply_rigid(const Shape& shape, const Eigen::MatrixXd& transform) {
  if (std::holds_alternative<GridImage>(shape)) {
    throw UnsupportedRepresentation("rigid transforms apply to point-based shapes only");
  }
  const PointSet& pts = points_of(shape);
  const Eigen::Index d = pts.cols();
  if (transform.rows() != d + 1 || transform.cols() != d + 1) {
    throw InvalidInput("transform size does not match the shape dimension");
  }
  const Eigen::RowVectorXd shift = transform.topRightCorner(d, 1).transpose();
  PointSet moved = (pts * transform.topLeftCorner(d, d).transpose()).rowwise() + shift;
  if (std::holds_alternative<CurveShape>(shape)) return CurveShape{std::move(moved)};
  return LandmarkShape{std::move(moved)};
}

RigidFit fit_mean_rigid(const Shape& q_mes, const std::vector<Shape>& dataset,
                        const MatchSpec& match, const RigidFitConfig& cfg) {
  if (dataset.empty()) throw InvalidInput("rigid pre-alignment needs a non-empty dataset");
  const int d = static_cast<int>(points_of(q_mes).cols());
  RigidFit fit;
  fit.params = RigidParams::zero(d);
  const Eigen::Index np = fit.params.omega.size();

  Objective cur = evaluate(q_mes, dataset, match, fit.params);
  fit.history.push_back(cur.value);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(np), m2 = Eigen::VectorXd::Zero(np);
  double lr = cfg.step_size;
  constexpr double b1 = 0.9, b2 = 0.999;
  int t = 0;
  int stalled = 0;
  for (fit.iterations = 0; fit.iterations < cfg.max_iters; ++fit.iterations) {
    if (cur.gradient.norm() == 0.0) {
      fit.converged = true;
      break;
    }
    ++t;
    m1 = b1 * m1 + (1 - b1) * cur.gradient;
    m2 = b2 * m2 + (1 - b2) * cur.gradient.cwiseProduct(cur.gradient);
    Eigen::VectorXd dir = (m1 / (1 - std::pow(b1, t))).array() /
                          ((m2 / (1 - std::pow(b2, t))).array().sqrt() + 1e-300);
    if (dir.dot(cur.gradient) <= 0.0) {
      // Momentum points uphill: restart the moments.
      t = 1;
      m1 = (1 - b1) * cur.gradient;
      m2 = (1 - b2) * cur.gradient.cwiseProduct(cur.gradient);
      dir = cur.gradient.array() / (cur.gradient.array().abs() + 1e-300);
    }
    // Backtrack so that accepted iterates never increase the objective.
    bool accepted = false;
    RigidParams trial = fit.params;
    Objective next;
    for (int k = 0; k < 60; ++k) {
      trial.omega = fit.params.omega - lr * dir;
      next = evaluate(q_mes, dataset, match, trial);
      if (next.value <= cur.value) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      fit.converged = true;
      break;
    }
    const double decrease = cur.value - next.value;
    fit.params = trial;
    cur = next;
    fit.history.push_back(cur.value);
    stalled = decrease <= cfg.tolerance * std::max(cur.value, 1e-300) ? stalled + 1 : 0;
    if (stalled >= 20 || cur.value == 0.0) {
      fit.converged = true;
      break;
    }
    lr = std::min(cfg.step_size, lr * 1.2);
  }
  fit.objective = cur.value;
  return fit;
}

}  // namespace diffcal
