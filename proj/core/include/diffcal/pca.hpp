#pragma once

#include <Eigen/Core>

namespace diffcal {

struct PcaBasis {
  Eigen::VectorXd mean;                // D
  Eigen::MatrixXd components;          // P x D, orthonormal rows
  Eigen::VectorXd explained_variance;  // P, non-increasing
  double variance_fraction = 0.0;      // share of the total variance kept
  double total_variance = 0.0;
  bool degenerate = false;             // data had zero variance

  int size() const { return static_cast<int>(components.rows()); }
  int dim() const { return static_cast<int>(mean.size()); }

  // u = C (v - mean)
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;
  // v = mean + C^T u
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& u) const;
};

// Centred thin SVD of the n x D data matrix (one sample per row). Keeps the
// smallest number of components reaching `variance_fraction`. The sign of each
// component makes its largest-magnitude entry positive.
PcaBasis fit_pca(const Eigen::MatrixXd& data, double variance_fraction = 0.99);

// n x P matrix of latent scores.
Eigen::MatrixXd pca_scores(const PcaBasis& basis, const Eigen::MatrixXd& data);

}  // namespace diffcal
