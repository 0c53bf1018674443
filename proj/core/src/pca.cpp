#include "diffcal/pca.hpp"

#include <Eigen/SVD>

#include "diffcal/error.hpp"

namespace diffcal {

Eigen::VectorXd PcaBasis::project(const Eigen::VectorXd& v) const {
  if (v.size() != mean.size()) throw InvalidInput("PCA projection: dimension mismatch");
  return components * (v - mean);
}

Eigen::VectorXd PcaBasis::reconstruct(const Eigen::VectorXd& u) const {
  if (u.size() != components.rows()) throw InvalidInput("PCA reconstruction: latent size mismatch");
  return mean + components.transpose() * u;
}

PcaBasis fit_pca(const Eigen::MatrixXd& data, double variance_fraction) {
  if (data.rows() < 2) throw InvalidInput("PCA needs at least 2 samples");
  if (!(variance_fraction > 0.0 && variance_fraction <= 1.0)) {
    throw InvalidInput("PCA variance fraction must lie in (0, 1]");
  }
  if (!data.allFinite()) throw InvalidInput("PCA data is not finite");
  const double n = static_cast<double>(data.rows());
  PcaBasis basis;
  basis.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - basis.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd var = svd.singularValues().array().square() / (n - 1.0);
  basis.total_variance = var.sum();

  Eigen::Index p = 1;
  if (basis.total_variance > 0.0) {
    double acc = 0.0;
    for (p = 0; p < var.size();) {
      acc += var(p++);
      if (acc >= variance_fraction * basis.total_variance) break;
    }
    basis.variance_fraction = acc / basis.total_variance;
  } else {
    basis.degenerate = true;
    basis.variance_fraction = 1.0;
  }
  basis.components = svd.matrixV().leftCols(p).transpose();
  basis.explained_variance = var.head(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::Index arg;
    basis.components.row(j).cwiseAbs().maxCoeff(&arg);
    if (basis.components(j, arg) < 0.0) basis.components.row(j) *= -1.0;
  }
  return basis;
}

Eigen::MatrixXd pca_scores(const PcaBasis& basis, const Eigen::MatrixXd& data) {
  if (data.cols() != basis.mean.size()) throw InvalidInput("PCA scores: dimension mismatch");
  return (data.rowwise() - basis.mean.transpose()) * basis.components.transpose();
}

}  // namespace diffcal
