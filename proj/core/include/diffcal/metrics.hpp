#pragma once

#include <Eigen/Core>
#include <vector>

#include "diffcal/surrogate.hpp"

namespace diffcal {

struct ValidationReport {
  double nrmse = 0.0;
  double nmae = 0.0;
  double q2 = 0.0;
  double crps = 0.0;
  double iae = 0.0;
  double rrmse = 0.0;  // percent
  int dimensions = 0;  // output dimensions entering the averages
  int samples = 0;
};

// Gaussian predictions (mean, variance) against truth, n x D each. Per-dimension
// metrics are averaged over dimensions whose test variance is non-negligible.
ValidationReport validation_metrics(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& mean,
                                    const Eigen::MatrixXd& variance);

ValidationReport validation_report(const SurrogateModel& model,
                                   const std::vector<VelocityRecord>& held_out);

// Standard normal quantile.
double normal_quantile(double p);

}  // namespace diffcal
