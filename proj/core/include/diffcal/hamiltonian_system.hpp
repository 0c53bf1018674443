#pragma once

#include <Eigen/Core>
#include <memory>

#include "diffcal/kernels.hpp"
#include "diffcal/shapes.hpp"

namespace diffcal {

// A pair of vectors in dofs() layout: either the time derivatives
// (dq/dt, dpi/dt) or a pair of cotangents.
struct PhasePair {
  Eigen::VectorXd q;
  Eigen::VectorXd pi;
};

// Discrete Hamiltonian dynamics of a shape representation in (q, pi) space.
//
// The discrete Hamiltonian H(q, pi) is defined once per representation and
// the flow is its exact symplectic gradient under the pairing
// <pi, dq> = w * sum_k pi_k dq_k:
//
//   dq/dt = (1/w) dH/dpi,    dpi/dt = -(1/w) dH/dq.
//
// w is 1 for point shapes and the cell area for images, so the image
// equations read dq/dt = -grad q . v and dpi/dt = -div(pi v) with the
// divergence being the transpose of the gradient stencil.
class HamiltonianSystem {
 public:
  virtual ~HamiltonianSystem() = default;

  virtual double energy(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const = 0;
  virtual PhasePair fields(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const = 0;
  // Transposed Jacobian of fields() applied to (cot_dq, cot_dpi); returns the
  // cotangents on (q, pi).
  virtual PhasePair vjp(const Eigen::VectorXd& q, const Eigen::VectorXd& pi,
                        const Eigen::VectorXd& cot_dq,
                        const Eigen::VectorXd& cot_dpi) const = 0;
  // Velocity v = K xi_q^* pi sampled at the degrees of freedom: the point
  // velocities for point shapes, (vx, vy) stacked pixel fields for images.
  virtual Eigen::VectorXd velocity(const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& pi) const = 0;

  virtual double pairing_weight() const = 0;
  // Largest pointwise speed of the velocity field on the shape support.
  virtual double max_speed(const Eigen::VectorXd& q, const Eigen::VectorXd& pi) const = 0;
  // Grid spacing used by the CFL guard; +inf for point shapes.
  virtual double min_spacing() const = 0;
};

std::unique_ptr<HamiltonianSystem> make_system(const Shape& shape, const KernelSpec& kernel);

}  // namespace diffcal
