#pragma once

#include <Eigen/Core>
#include <vector>

#include "diffcal/shapes.hpp"

namespace diffcal {

// Coordinates in se(d), d in {2, 3}: the d(d-1)/2 rotation generators followed
// by the d translation generators. For d = 2 that is (theta, vx, vy); for
// d = 3, (wx, wy, wz, vx, vy, vz) with Omega = [w]_x.
struct RigidParams {
  int dim = 2;
  Eigen::VectorXd omega;

  static RigidParams zero(int dim);
  static int parameter_count(int dim) { return dim * (dim + 1) / 2; }
};

// Block matrix [[Omega, v], [0, 0]] of size (d + 1) x (d + 1).
Eigen::MatrixXd lie_algebra_matrix(const RigidParams& params);

// Closed-form exponential (Rodrigues) as a homogeneous rigid transform.
Eigen::MatrixXd se_exp(const RigidParams& params);

// d se_exp / d omega_l for every parameter l.
std::vector<Eigen::MatrixXd> se_exp_jacobian(const RigidParams& params);

// Maps every point of a landmark or curve shape through `transform`.
Shape apply_rigid(const Shape& shape, const Eigen::MatrixXd& transform);

struct RigidFitConfig {
  double step_size = 0.02;
  int max_iters = 3000;
  double tolerance = 1e-15;  // relative objective decrease
};

struct RigidFit {
  RigidParams params;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;  // objective at every accepted iterate
};

// argmin_omega sum_i C(q_mes, exp(M(omega)) . q_i): one transform for the
// whole dataset. The caller applies it.
RigidFit fit_mean_rigid(const Shape& q_mes, const std::vector<Shape>& dataset,
                        const MatchSpec& match, const RigidFitConfig& cfg = {});

}  // namespace diffcal
