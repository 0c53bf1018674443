#include "diffcal/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

constexpr double kMinNugget = 1e-8;
constexpr double kMaxNugget = 1e-2;

// Box for the log hyperparameters: lengthscales, signal variance, nugget.
double lower_bound(Eigen::Index i, Eigen::Index p) {
  if (i < p) return std::log(1e-2);
  if (i == p) return std::log(1e-3);
  return std::log(kMinNugget);
}

double upper_bound(Eigen::Index i, Eigen::Index p) {
  if (i < p) return std::log(1e2);
  if (i == p) return std::log(1e3);
  return 0.0;
}

Eigen::VectorXd clamp_box(Eigen::VectorXd theta, Eigen::Index p) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta(i) = std::clamp(theta(i), lower_bound(i, p), upper_bound(i, p));
  }
  return theta;
}

Eigen::MatrixXd se_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          const Eigen::VectorXd& ls, double s2) {
  const Eigen::MatrixXd as = a.array().rowwise() / ls.transpose().array();
  const Eigen::MatrixXd bs = b.array().rowwise() / ls.transpose().array();
  Eigen::MatrixXd d2 = (-2.0 * as * bs.transpose()).colwise() + as.rowwise().squaredNorm();
  d2.rowwise() += bs.rowwise().squaredNorm().transpose();
  return s2 * (-0.5 * d2.array().max(0.0)).exp().matrix();
}

// Projected BFGS on f = -lml inside the box.
Eigen::VectorXd maximize(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Eigen::VectorXd x,
                         int max_iters, double& best) {
  const Eigen::Index p = z.cols();
  const Eigen::Index m = x.size();
  x = clamp_box(x, p);
  Eigen::VectorXd g;
  double f = -gp_log_marginal_likelihood(z, y, x, &g);
  if (!std::isfinite(f)) {
    best = -std::numeric_limits<double>::infinity();
    return x;
  }
  g = -g;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(m, m);
  bool fresh = true;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd d = -h * g;
    if (g.dot(d) >= 0.0) {
      h.setIdentity();
      fresh = true;
      d = -g;
    }
    double t = 1.0;
    bool moved = false;
    Eigen::VectorXd xn, gn;
    double fn = 0.0;
    for (int k = 0; k < 30; ++k, t *= 0.5) {
      xn = clamp_box(x + t * d, p);
      fn = -gp_log_marginal_likelihood(z, y, xn, &gn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * g.dot(xn - x)) {
        moved = true;
        break;
      }
    }
    if (!moved || (xn - x).norm() == 0.0) {
      if (fresh) break;
      h.setIdentity();
      fresh = true;
      continue;
    }
    gn = -gn;
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = gn - g;
    const double sy = s.dot(yv);
    const double drop = f - fn;
    x = xn;
    f = fn;
    g = gn;
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
      h = (id - rho * s * yv.transpose()) * h * (id - rho * yv * s.transpose()) +
          rho * s * s.transpose();
      fresh = false;
    }
    if (drop <= 1e-8 * (1.0 + std::abs(f))) break;
  }
  best = -f;
  return x;
}

}  // namespace

Eigen::VectorXd GpHyperparameters::to_log() const {
  Eigen::VectorXd t(lengthscales.size() + 2);
  t.head(lengthscales.size()) = lengthscales.array().log();
  t(lengthscales.size()) = std::log(signal_variance);
  t(lengthscales.size() + 1) = std::log(nugget);
  return t;
}

GpHyperparameters GpHyperparameters::from_log(const Eigen::VectorXd& theta) {
  const Eigen::Index p = theta.size() - 2;
  return {theta.head(p).array().exp(), std::exp(theta(p)), std::exp(theta(p + 1))};
}

double gp_log_marginal_likelihood(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& theta, Eigen::VectorXd* gradient) {
  const Eigen::Index n = z.rows(), p = z.cols();
  const GpHyperparameters h = GpHyperparameters::from_log(theta);
  const Eigen::MatrixXd kse = se_kernel(z, z, h.lengthscales, h.signal_variance);
  Eigen::MatrixXd k = kse;
  k.diagonal().array() += h.nugget;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = llt.solve(y);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double lml = -0.5 * y.dot(alpha) - 0.5 * logdet -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(lml)) return -std::numeric_limits<double>::infinity();
  if (gradient) {
    // d lml / d theta = 0.5 tr((alpha alpha^T - K^-1) dK / d theta)
    const Eigen::MatrixXd w = alpha * alpha.transpose() -
                              llt.solve(Eigen::MatrixXd::Identity(n, n));
    gradient->resize(theta.size());
    const Eigen::MatrixXd wk = w.cwiseProduct(kse);
    for (Eigen::Index d = 0; d < p; ++d) {
      const double l2 = h.lengthscales(d) * h.lengthscales(d);
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const double diff = z(i, d) - z(j, d);
          acc += wk(i, j) * diff * diff;
        }
      }
      (*gradient)(d) = 0.5 * acc / l2;
    }
    (*gradient)(p) = 0.5 * wk.sum();
    (*gradient)(p + 1) = 0.5 * h.nugget * w.trace();
  }
  return lml;
}

GpModel::GpModel(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                 const GpHyperparameters& hyper)
    : inputs_(inputs), targets_(targets), hyper_(hyper) {
  const Eigen::Index n = inputs.rows(), p = inputs.cols();
  if (n < 1 || p < 1 || targets.size() != n) throw InvalidInput("GP: inconsistent training data");
  if (!inputs.allFinite() || !targets.allFinite()) throw InvalidInput("GP: training data not finite");
  if (hyper.lengthscales.size() != p || (hyper.lengthscales.array() <= 0.0).any() ||
      !(hyper.signal_variance > 0.0) || !(hyper.nugget > 0.0)) {
    throw InvalidInput("GP: invalid hyperparameters");
  }
  in_lo_ = inputs.colwise().minCoeff().transpose();
  in_scale_ = inputs.colwise().maxCoeff().transpose() - in_lo_;
  for (Eigen::Index d = 0; d < p; ++d) {
    if (!(in_scale_(d) > 0.0)) in_scale_(d) = 1.0;
  }
  y_mean_ = targets.mean();
  const double sd = std::sqrt((targets.array() - y_mean_).square().sum() / static_cast<double>(n));
  y_scale_ = sd > 1e-300 ? sd : 1.0;
  z_ = (inputs.rowwise() - in_lo_.transpose()).array().rowwise() / in_scale_.transpose().array();
  const Eigen::VectorXd y = (targets.array() - y_mean_) / y_scale_;

  hyper_.nugget = std::max(hyper_.nugget, kMinNugget);
  const Eigen::MatrixXd kse = se_kernel(z_, z_, hyper_.lengthscales, hyper_.signal_variance);
  for (;;) {
    Eigen::MatrixXd k = kse;
    k.diagonal().array() += hyper_.nugget;
    llt_.compute(k);
    if (llt_.info() == Eigen::Success &&
        (llt_.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
      break;
    }
    if (hyper_.nugget >= kMaxNugget) {
      throw NumericalFailure("GP covariance is not positive definite even with nugget 1e-2");
    }
    hyper_.nugget = std::min(hyper_.nugget * 10.0, kMaxNugget);
  }
  alpha_ = llt_.solve(y);
  lml_ = gp_log_marginal_likelihood(z_, y, hyper_.to_log(), nullptr);
}

GpModel GpModel::fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                     const GpFitConfig& cfg) {
  if (inputs.rows() < 3) throw InvalidInput("GP fit needs at least 3 training points");
  if (cfg.restarts < 1) throw InvalidInput("GP fit needs at least one start");
  // The placeholder model only serves the normalization.
  const Eigen::Index p = inputs.cols();
  GpModel norm(inputs, targets, GpHyperparameters{Eigen::VectorXd::Ones(p), 1.0, 1e-2});
  const Eigen::VectorXd y = (targets.array() - norm.y_mean_) / norm.y_scale_;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> ls(std::log(0.1), std::log(2.0));
  std::uniform_real_distribution<double> sv(std::log(0.3), std::log(3.0));
  std::uniform_real_distribution<double> ng(std::log(1e-6), std::log(1e-2));
  Eigen::VectorXd best_theta;
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Eigen::VectorXd start(p + 2);
    if (r == 0) {
      start.head(p).setConstant(std::log(0.5));
      start(p) = 0.0;
      start(p + 1) = std::log(1e-4);
    } else {
      for (Eigen::Index d = 0; d < p; ++d) start(d) = ls(rng);
      start(p) = sv(rng);
      start(p + 1) = ng(rng);
    }
    double value;
    const Eigen::VectorXd theta = maximize(norm.z_, y, start, cfg.max_iters, value);
    if (value > best || best_theta.size() == 0) {
      best = value;
      best_theta = theta;
    }
  }
  return GpModel(inputs, targets, GpHyperparameters::from_log(best_theta));
}

GpPrediction GpModel::predict(const Eigen::VectorXd& x, bool with_gradient) const {
  if (x.size() != inputs_.cols()) throw InvalidInput("GP prediction: input dimension mismatch");
  const Eigen::RowVectorXd zx =
      ((x - in_lo_).array() / in_scale_.array()).matrix().transpose();
  const Eigen::VectorXd ks = se_kernel(z_, zx, hyper_.lengthscales, hyper_.signal_variance);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  GpPrediction out;
  out.mean = y_mean_ + y_scale_ * ks.dot(alpha_);
  const double latent = std::max(hyper_.signal_variance - v.squaredNorm(), 0.0);
  out.variance = y_scale_ * y_scale_ * (latent + hyper_.nugget);
  if (with_gradient) {
    const Eigen::Index p = x.size();
    // dk_i / dx_d = -k_i (zx_d - z_id) / (l_d^2 scale_d)
    Eigen::MatrixXd dks(z_.rows(), p);
    for (Eigen::Index d = 0; d < p; ++d) {
      const double c = 1.0 / (hyper_.lengthscales(d) * hyper_.lengthscales(d) * in_scale_(d));
      dks.col(d) = -(ks.array() * (zx(d) - z_.col(d).array()) * c).matrix();
    }
    out.mean_gradient = y_scale_ * dks.transpose() * alpha_;
    const Eigen::VectorXd kinv_ks = llt_.matrixU().solve(v);
    out.variance_gradient = -2.0 * y_scale_ * y_scale_ * dks.transpose() * kinv_ks;
    if (hyper_.signal_variance - v.squaredNorm() <= 0.0) out.variance_gradient.setZero();
  }
  return out;
}

}  // namespace diffcal
