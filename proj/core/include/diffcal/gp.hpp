#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>

namespace diffcal {

// Hyperparameters of k(x, x') = s2 exp(-sum_k (x_k - x'_k)^2 / (2 l_k^2)),
// expressed on min-max normalized inputs and standardized targets.
struct GpHyperparameters {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;
  double nugget = 1e-6;

  Eigen::VectorXd to_log() const;
  static GpHyperparameters from_log(const Eigen::VectorXd& theta);
};

struct GpFitConfig {
  int restarts = 5;
  std::uint64_t seed = 0;
  int max_iters = 100;
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;  // includes the nugget
  Eigen::VectorXd mean_gradient;
  Eigen::VectorXd variance_gradient;
};

class GpModel {
 public:
  GpModel() = default;
  // Conditions on (inputs, targets) with fixed hyperparameters. The nugget is
  // floored at 1e-8 and raised x10 (up to 1e-2) until the covariance factors.
  GpModel(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
          const GpHyperparameters& hyper);

  // Maximum marginal likelihood over log hyperparameters, multi-start.
  static GpModel fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                     const GpFitConfig& cfg = {});

  GpPrediction predict(const Eigen::VectorXd& x, bool with_gradient = false) const;

  // Of the standardized targets, as optimized.
  double log_marginal_likelihood() const { return lml_; }

  const GpHyperparameters& hyperparameters() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  int input_dim() const { return static_cast<int>(inputs_.cols()); }

 private:
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  GpHyperparameters hyper_;
  Eigen::VectorXd in_lo_, in_scale_;
  double y_mean_ = 0.0, y_scale_ = 1.0;
  Eigen::MatrixXd z_;  // normalized inputs
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
};

// Log marginal likelihood and its gradient in log-hyperparameter space for
// already normalized data. Returns -inf when the covariance does not factor.
double gp_log_marginal_likelihood(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& theta, Eigen::VectorXd* gradient);

}  // namespace diffcal
