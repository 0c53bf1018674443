#include "diffcal/metrics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// CRPS of N(mu, s^2) at y.
double gaussian_crps(double y, double mu, double s) {
  if (s <= 0.0) return std::abs(y - mu);
  const double z = (y - mu) / s;
  return s * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("normal_quantile needs p in (0, 1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  const double x = 0.5 * (lo + hi);
  return x;
}

ValidationReport validation_metrics(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& mean,
                                    const Eigen::MatrixXd& variance) {
  const Eigen::Index n = truth.rows(), D = truth.cols();
  if (mean.rows() != n || mean.cols() != D || variance.rows() != n || variance.cols() != D) {
    throw InvalidInput("validation: shape mismatch");
  }
  if (n < 2) throw InvalidInput("validation needs at least 2 samples");
  constexpr int kLevels = 101;
  Eigen::VectorXd alphas = Eigen::VectorXd::LinSpaced(kLevels, 0.0, 1.0);
  Eigen::VectorXd radii(kLevels);
  for (int a = 0; a < kLevels; ++a) {
    radii(a) = a == 0 ? 0.0
               : a == kLevels - 1 ? std::numeric_limits<double>::infinity()
                                  : normal_quantile(0.5 + 0.5 * alphas(a));
  }

  const Eigen::RowVectorXd ybar = truth.colwise().mean();
  const Eigen::RowVectorXd tvar = (truth.rowwise() - ybar).array().square().colwise().sum() /
                                  static_cast<double>(n);
  const double threshold = 1e-10 * std::max(tvar.mean(), 1e-300);

  ValidationReport rep;
  rep.samples = static_cast<int>(n);
  for (Eigen::Index d = 0; d < D; ++d) {
    if (!(tvar(d) > threshold)) continue;
    ++rep.dimensions;
    const double sd = std::sqrt(tvar(d));
    const Eigen::ArrayXd err = truth.col(d).array() - mean.col(d).array();
    const Eigen::ArrayXd dev = truth.col(d).array() - ybar(d);
    rep.nrmse += std::sqrt(err.square().mean()) / sd;
    rep.nmae += err.abs().mean() / dev.abs().mean();
    rep.q2 += 1.0 - err.square().sum() / dev.square().sum();
    double crps = 0.0;
    Eigen::VectorXd inside = Eigen::VectorXd::Zero(kLevels);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = std::sqrt(std::max(variance(i, d), 0.0));
      crps += gaussian_crps(truth(i, d), mean(i, d), s);
      const double z = s > 0.0 ? std::abs(err(i)) / s
                                : (err(i) == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
      for (int a = 1; a < kLevels; ++a) {
        if (z <= radii(a)) inside(a) += 1.0;
      }
    }
    rep.crps += crps / static_cast<double>(n) / sd;
    const Eigen::ArrayXd gap = (inside.array() / static_cast<double>(n) - alphas.array()).abs();
    double iae = 0.0;
    for (int a = 1; a < kLevels; ++a) iae += 0.5 * (gap(a) + gap(a - 1)) * (alphas(a) - alphas(a - 1));
    rep.iae += iae;
  }
  if (rep.dimensions > 0) {
    const double k = rep.dimensions;
    rep.nrmse /= k;
    rep.nmae /= k;
    rep.q2 /= k;
    rep.crps /= k;
    rep.iae /= k;
  }
  const double denom = truth.squaredNorm();
  rep.rrmse = denom > 0.0 ? 100.0 * std::sqrt((truth - mean).squaredNorm() / denom) : 0.0;
  return rep;
}

ValidationReport validation_report(const SurrogateModel& model,
                                   const std::vector<VelocityRecord>& held_out) {
  if (held_out.size() < 5) throw InvalidInput("validation needs at least 5 held-out records");
  const auto n = static_cast<Eigen::Index>(held_out.size());
  const Eigen::Index D = model.basis.dim();
  Eigen::MatrixXd truth(n, D), mean(n, D), var(n, D);
  const Eigen::MatrixXd c2 = model.basis.components.array().square();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (held_out[i].v0_flat.size() != D) throw InvalidInput("held-out record has the wrong size");
    const LatentPrediction lp = predict_latent(model, held_out[i].beta);
    truth.row(i) = held_out[i].v0_flat.transpose();
    mean.row(i) = reconstruct_v0(model, lp.mean).transpose();
    var.row(i) = (c2.transpose() * lp.variance + model.residual_variance).transpose();
  }
  return validation_metrics(truth, mean, var);
}

}  // namespace diffcal
