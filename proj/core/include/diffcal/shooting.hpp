#pragma once

#include <Eigen/Core>
#include <vector>

#include "diffcal/kernels.hpp"
#include "diffcal/shapes.hpp"

namespace diffcal {

enum class Scheme { Leapfrog, RK2 };

struct OptimizerConfig {
  double step_size = 0.05;
  int max_iters = 300;
  double grad_clip_norm = 100.0;
  double tolerance = 1e-7;  // relative loss change
};

struct ShootingConfig {
  int num_steps = 15;
  Scheme scheme = Scheme::Leapfrog;
  OptimizerConfig optimizer{};
  MatchSpec match{};
  KernelSpec kernel{};
  // Images only: the step count is doubled until max|v| dt / h <= cfl_limit.
  double cfl_limit = 0.5;

  void validate() const;
};

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd pi;
};

// (q_t, pi_t) at the uniform times t = k / steps, k = 0..steps.
struct Trajectory {
  std::vector<PhasePoint> states;
  int steps() const { return static_cast<int>(states.size()) - 1; }
};

struct GeodesicSolution {
  Eigen::VectorXd pi0;
  Trajectory trajectory;
  double hamiltonian = 0.0;  // H(q0, pi0)
  double match_residual = 0.0;
  double loss = 0.0;
  bool converged = false;
  int iterations = 0;
};

double hamiltonian(const Shape& q, const Eigen::VectorXd& pi, const KernelSpec& kernel);

// Number of steps actually taken for (q0, pi0) once the CFL guard is applied.
int effective_steps(const Shape& q0, const Eigen::VectorXd& pi0, const ShootingConfig& cfg);

// Throws IntegrationFailure with the index of the first non-finite step.
Trajectory integrate_geodesic(const Shape& q0, const Eigen::VectorXd& pi0,
                              const ShootingConfig& cfg);

struct ShootingLoss {
  double loss = 0.0;
  double hamiltonian = 0.0;
  double match = 0.0;  // unweighted C(q_1, target)
  Eigen::VectorXd gradient;  // d loss / d pi0
};

// H(q0, pi0) + lambda C(q_1, target), differentiated in reverse through the
// discrete integrator.
ShootingLoss shooting_loss(const Shape& q0, const Eigen::VectorXd& pi0, const Shape& target,
                           const ShootingConfig& cfg);

GeodesicSolution register_shapes(const Shape& source, const Shape& target,
                                 const ShootingConfig& cfg);

// E = 2 H0, the squared geodesic length / kinetic energy of the path.
double deformation_energy(const GeodesicSolution& sol);

// v0 = K xi_q^* pi0 sampled at q's degrees of freedom (points, or stacked
// vx/vy pixel fields for images).
Eigen::VectorXd initial_velocity(const Shape& q, const Eigen::VectorXd& pi0,
                                 const KernelSpec& kernel);

}  // namespace diffcal
