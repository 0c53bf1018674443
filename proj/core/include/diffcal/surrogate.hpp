#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "diffcal/gp.hpp"
#include "diffcal/pca.hpp"

namespace diffcal {

struct VelocityRecord {
  Eigen::VectorXd beta;
  Eigen::VectorXd v0_flat;
  double energy = 0.0;      // 2 H0
  Eigen::VectorXd pi0_flat;  // optional; enables the momentum lift
};

// Drops the ceil(fraction n) records of largest energy. Among equal energies
// the later record goes first; survivors keep their order.
std::vector<VelocityRecord> filter_worst(const std::vector<VelocityRecord>& records,
                                         double fraction = 0.10);

struct SurrogateConfig {
  double variance_fraction = 0.99;
  GpFitConfig gp{};
  int jobs = 1;
};

// Linear map from uncentred latent codes z = u + C mean to initial momenta,
// pi0 = B^T z, fitted by least squares on the training momenta. z = 0 gives
// pi0 = 0.
struct MomentumBasis {
  Eigen::MatrixXd components;  // P x D_pi

  bool empty() const { return components.size() == 0; }
};

struct SurrogateModel {
  PcaBasis basis;
  std::vector<GpModel> gps;
  Eigen::VectorXd u_min;  // latent code of the minimal-energy training record
  MomentumBasis momentum;
  // Per-dimension variance of the training data left out of the PCA span.
  Eigen::VectorXd residual_variance;
  int training_size = 0;

  int latent_dim() const { return basis.size(); }
  int input_dim() const { return gps.empty() ? 0 : gps.front().input_dim(); }
};

SurrogateModel fit_surrogate(const std::vector<VelocityRecord>& records,
                             const SurrogateConfig& cfg = {});

struct LatentPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::MatrixXd mean_jacobian;      // P x p, filled on request
  Eigen::MatrixXd variance_jacobian;  // P x p
};

LatentPrediction predict_latent(const SurrogateModel& model, const Eigen::VectorXd& beta,
                                bool with_jacobian = false);

// v_mod = mean + C^T u
Eigen::VectorXd reconstruct_v0(const SurrogateModel& model, const Eigen::VectorXd& u);

// Momentum whose velocity is reconstruct_v0(u) on the training support.
Eigen::VectorXd momentum_from_latent(const SurrogateModel& model, const Eigen::VectorXd& u);

std::string serialize_surrogate(const SurrogateModel& model);
SurrogateModel deserialize_surrogate(const std::string& text);

}  // namespace diffcal
