#include "diffcal/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "diffcal/error.hpp"
#include "diffcal/hamiltonian_system.hpp"

namespace diffcal {
namespace {

constexpr int kMaxStepDoublings = 4;
constexpr int kMaxFixedPointIters = 200;
constexpr double kFixedPointTol = 1e-13;

// Iterates x <- map(x) until the update is negligible; the implicit stages of
// the symplectic scheme are contractions for reasonable step sizes.
template <class Map>
void solve_fixed_point(Eigen::VectorXd& x, Map&& map, int step) {
  for (int it = 0; it < kMaxFixedPointIters; ++it) {
    Eigen::VectorXd next = map(x);
    const double change = (next - x).norm();
    const double scale = next.norm();
    x = std::move(next);
    if (!x.allFinite()) break;
    if (change <= kFixedPointTol * scale || change == 0.0) return;
  }
  throw IntegrationFailure("implicit leapfrog stage did not converge", step + 1);
}

// Forward states plus the intermediate stage of every step (leapfrog half
// momentum, or RK2 midpoint), kept for the reverse pass.
struct ForwardRecord {
  Trajectory trajectory;
  std::vector<PhasePoint> stages;
  bool courant_exceeded = false;
};

bool finite(const PhasePoint& s) { return s.q.allFinite() && s.pi.allFinite(); }

// Stops early with courant_exceeded set when max speed * dt exceeds
// max_displacement (pass infinity to disable the check).
ForwardRecord integrate(const HamiltonianSystem& sys, const Eigen::VectorXd& q0,
                        const Eigen::VectorXd& pi0, int steps, Scheme scheme,
                        double max_displacement = std::numeric_limits<double>::infinity()) {
  ForwardRecord rec;
  rec.trajectory.states.reserve(steps + 1);
  rec.stages.reserve(steps);
  rec.trajectory.states.push_back({q0, pi0});
  const double dt = 1.0 / steps;
  for (int k = 0; k < steps; ++k) {
    const PhasePoint& s = rec.trajectory.states.back();
    PhasePoint next;
    if (scheme == Scheme::Leapfrog) {
      // pi_h = pi + dt/2 G(q, pi_h)
      PhasePoint half{s.q, s.pi + 0.5 * dt * sys.fields(s.q, s.pi).pi};
      solve_fixed_point(half.pi, [&](const Eigen::VectorXd& p) {
        return (s.pi + 0.5 * dt * sys.fields(s.q, p).pi).eval();
      }, k);
      // q' = q + dt/2 (F(q, pi_h) + F(q', pi_h))
      const Eigen::VectorXd f_start = sys.fields(s.q, half.pi).q;
      next.q = s.q + dt * f_start;
      solve_fixed_point(next.q, [&](const Eigen::VectorXd& x) {
        return (s.q + 0.5 * dt * (f_start + sys.fields(x, half.pi).q)).eval();
      }, k);
      next.pi = half.pi + 0.5 * dt * sys.fields(next.q, half.pi).pi;
      rec.stages.push_back(std::move(half));
    } else {
      const PhasePair f0 = sys.fields(s.q, s.pi);
      PhasePoint mid{s.q + 0.5 * dt * f0.q, s.pi + 0.5 * dt * f0.pi};
      const PhasePair f1 = sys.fields(mid.q, mid.pi);
      next.q = s.q + dt * f1.q;
      next.pi = s.pi + dt * f1.pi;
      rec.stages.push_back(std::move(mid));
    }
    if (!finite(next)) {
      throw IntegrationFailure("geodesic integration produced non-finite state", k + 1);
    }
    if (std::isfinite(max_displacement) && k + 1 < steps &&
        sys.max_speed(next.q, next.pi) * dt > max_displacement) {
      rec.courant_exceeded = true;
      return rec;
    }
    rec.trajectory.states.push_back(std::move(next));
  }
  return rec;
}

// Pulls the cotangent (cq, cpi) on the final state back to the initial state.
PhasePair reverse(const HamiltonianSystem& sys, const ForwardRecord& rec, Scheme scheme,
                  Eigen::VectorXd cq, Eigen::VectorXd cpi) {
  const int steps = rec.trajectory.steps();
  const double dt = 1.0 / steps;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(cq.size());
  for (int k = steps - 1; k >= 0; --k) {
    const PhasePoint& s = rec.trajectory.states[k];
    const PhasePoint& stage = rec.stages[k];
    if (scheme == Scheme::Leapfrog) {
      const PhasePoint& next = rec.trajectory.states[k + 1];
      // pi' = pi_h + dt/2 G(q', pi_h)
      Eigen::VectorXd c_half = cpi;
      const PhasePair a = sys.vjp(next.q, stage.pi, zero, 0.5 * dt * cpi);
      cq += a.q;
      c_half += a.pi;
      // q' = q + dt/2 (F(q, pi_h) + F(q', pi_h)): mu = cq + dt/2 F_q(q')^T mu
      Eigen::VectorXd mu = cq;
      PhasePair at_next;
      solve_fixed_point(mu, [&](const Eigen::VectorXd& u) {
        at_next = sys.vjp(next.q, stage.pi, 0.5 * dt * u, zero);
        return (cq + at_next.q).eval();
      }, k);
      at_next = sys.vjp(next.q, stage.pi, 0.5 * dt * mu, zero);
      const PhasePair at_start = sys.vjp(s.q, stage.pi, 0.5 * dt * mu, zero);
      cq = mu + at_start.q;
      c_half += at_next.pi + at_start.pi;
      // pi_h = pi + dt/2 G(q, pi_h): lambda = c_half + dt/2 G_pi(q, pi_h)^T lambda
      Eigen::VectorXd lambda = c_half;
      solve_fixed_point(lambda, [&](const Eigen::VectorXd& l) {
        return (c_half + sys.vjp(s.q, stage.pi, zero, 0.5 * dt * l).pi).eval();
      }, k);
      const PhasePair c = sys.vjp(s.q, stage.pi, zero, 0.5 * dt * lambda);
      cq += c.q;
      cpi = lambda;
    } else {
      PhasePair m = sys.vjp(stage.q, stage.pi, dt * cq, dt * cpi);
      PhasePair f = sys.vjp(s.q, s.pi, 0.5 * dt * m.q, 0.5 * dt * m.pi);
      cq += m.q + f.q;
      cpi += m.pi + f.pi;
    }
  }
  return {std::move(cq), std::move(cpi)};
}

// Starts from num_steps, doubled while the initial Courant number exceeds
// cfl_limit; the step count is doubled again whenever the speed along the
// path does. At most kMaxStepDoublings doublings in total.
ForwardRecord integrate_guarded(const HamiltonianSystem& sys, const Eigen::VectorXd& q0,
                                const Eigen::VectorXd& pi0, const ShootingConfig& cfg) {
  int steps = cfg.num_steps;
  const double h = sys.min_spacing();
  if (!std::isfinite(h)) return integrate(sys, q0, pi0, steps, cfg.scheme);
  const double speed = sys.max_speed(q0, pi0);
  int doublings = 0;
  for (; doublings < kMaxStepDoublings && speed / steps / h > cfg.cfl_limit; ++doublings) steps *= 2;
  for (;; ++doublings, steps *= 2) {
    const double limit = doublings < kMaxStepDoublings ? cfg.cfl_limit * h
                                                       : std::numeric_limits<double>::infinity();
    ForwardRecord rec = integrate(sys, q0, pi0, steps, cfg.scheme, limit);
    if (!rec.courant_exceeded) return rec;
  }
}

void require_momentum(const Shape& q, const Eigen::VectorXd& pi) {
  if (pi.size() != dof_count(q)) {
    throw InvalidInput("momentum has " + std::to_string(pi.size()) +
                       " entries, shape has " + std::to_string(dof_count(q)) + " dofs");
  }
}

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int t = 0;
};

void adam_step(AdamState& st, Eigen::VectorXd& x, const Eigen::VectorXd& g, double lr) {
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-12;
  ++st.t;
  st.m = b1 * st.m + (1.0 - b1) * g;
  st.v = b2 * st.v + (1.0 - b2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(b1, st.t);
  const double c2 = 1.0 - std::pow(b2, st.t);
  x.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
}

GeodesicSolution optimise(const Shape& source, const Shape& target, const ShootingConfig& cfg,
                          double step_size) {
  const Eigen::Index n = dof_count(source);
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(n);
  AdamState adam{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};

  Eigen::VectorXd best_pi = pi;
  double best_loss = std::numeric_limits<double>::infinity();
  double prev_loss = std::numeric_limits<double>::infinity();
  double lr = step_size;
  bool converged = false;
  int iter = 0;
  for (; iter < cfg.optimizer.max_iters; ++iter) {
    ShootingLoss l = shooting_loss(source, pi, target, cfg);
    if (l.loss < best_loss) {
      best_loss = l.loss;
      best_pi = pi;
    }
    if (std::isfinite(prev_loss)) {
      const double rel = std::abs(prev_loss - l.loss) / std::max(std::abs(prev_loss), 1e-300);
      if (rel < cfg.optimizer.tolerance) {
        converged = true;
        break;
      }
      // Oscillation around the minimum: shrink the step.
      if (l.loss > prev_loss) lr *= 0.5;
    }
    if (l.gradient.squaredNorm() == 0.0) {
      converged = true;
      break;
    }
    prev_loss = l.loss;
    const double gn = l.gradient.norm();
    if (gn > cfg.optimizer.grad_clip_norm) l.gradient *= cfg.optimizer.grad_clip_norm / gn;
    adam_step(adam, pi, l.gradient, lr);
  }

  GeodesicSolution sol;
  sol.pi0 = best_pi;
  sol.iterations = iter;
  sol.converged = converged;
  sol.trajectory = integrate_geodesic(source, best_pi, cfg);
  sol.hamiltonian = hamiltonian(source, best_pi, cfg.kernel);
  sol.match_residual =
      match_cost(with_dofs(source, sol.trajectory.states.back().q), target, cfg.match).cost;
  sol.loss = sol.hamiltonian + cfg.match.weight * sol.match_residual;
  return sol;
}

}  // namespace

void ShootingConfig::validate() const {
  if (num_steps < 4) throw InvalidInput("num_steps must be at least 4");
  if (!(optimizer.step_size > 0.0)) throw InvalidInput("optimizer step_size must be positive");
  if (!(optimizer.grad_clip_norm > 0.0)) throw InvalidInput("grad_clip_norm must be positive");
  if (!(optimizer.tolerance >= 0.0)) throw InvalidInput("tolerance must be non-negative");
  if (optimizer.max_iters < 0) throw InvalidInput("max_iters must be non-negative");
  if (!(cfl_limit > 0.0)) throw InvalidInput("cfl_limit must be positive");
  match.validate();
  kernel.validate();
}

double hamiltonian(const Shape& q, const Eigen::VectorXd& pi, const KernelSpec& kernel) {
  require_momentum(q, pi);
  return make_system(q, kernel)->energy(dofs(q), pi);
}

int effective_steps(const Shape& q0, const Eigen::VectorXd& pi0, const ShootingConfig& cfg) {
  require_momentum(q0, pi0);
  return integrate_guarded(*make_system(q0, cfg.kernel), dofs(q0), pi0, cfg).trajectory.steps();
}

Trajectory integrate_geodesic(const Shape& q0, const Eigen::VectorXd& pi0,
                              const ShootingConfig& cfg) {
  cfg.validate();
  require_momentum(q0, pi0);
  const auto sys = make_system(q0, cfg.kernel);
  const Eigen::VectorXd q = dofs(q0);
  return integrate_guarded(*sys, q, pi0, cfg).trajectory;
}

ShootingLoss shooting_loss(const Shape& q0, const Eigen::VectorXd& pi0, const Shape& target,
                           const ShootingConfig& cfg) {
  cfg.validate();
  require_momentum(q0, pi0);
  if (q0.index() != target.index()) {
    throw InvalidInput("source and target shapes have different representations");
  }
  const auto sys = make_system(q0, cfg.kernel);
  const Eigen::VectorXd q = dofs(q0);
  const ForwardRecord rec = integrate_guarded(*sys, q, pi0, cfg);

  const MatchResult m =
      match_cost(with_dofs(q0, rec.trajectory.states.back().q), target, cfg.match);
  ShootingLoss out;
  out.hamiltonian = sys->energy(q, pi0);
  out.match = m.cost;
  out.loss = out.hamiltonian + cfg.match.weight * m.cost;

  const PhasePair back = reverse(*sys, rec, cfg.scheme, cfg.match.weight * m.gradient,
                                 Eigen::VectorXd::Zero(pi0.size()));
  // dH/dpi = w * dq/dt at t = 0
  out.gradient = back.pi + sys->pairing_weight() * sys->fields(q, pi0).q;
  return out;
}

GeodesicSolution register_shapes(const Shape& source, const Shape& target,
                                 const ShootingConfig& cfg) {
  cfg.validate();
  validate(source);
  validate(target);
  if (source.index() != target.index()) {
    throw InvalidInput("source and target shapes have different representations");
  }
  try {
    return optimise(source, target, cfg, cfg.optimizer.step_size);
  } catch (const IntegrationFailure&) {
    return optimise(source, target, cfg, 0.5 * cfg.optimizer.step_size);
  }
}

double deformation_energy(const GeodesicSolution& sol) { return 2.0 * sol.hamiltonian; }

Eigen::VectorXd initial_velocity(const Shape& q, const Eigen::VectorXd& pi0,
                                 const KernelSpec& kernel) {
  require_momentum(q, pi0);
  return make_system(q, kernel)->velocity(dofs(q), pi0);
}

}  // namespace diffcal
