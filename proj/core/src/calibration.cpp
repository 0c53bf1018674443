#include "diffcal/calibration.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>

#include "diffcal/error.hpp"
#include "diffcal/hamiltonian_system.hpp"

namespace diffcal {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

PosteriorChain to_chain(const ChainOutput& out, const McmcConfig& cfg, int beta_dim) {
  PosteriorChain chain;
  chain.samples = out.samples;
  chain.log_post = out.log_density;
  chain.acceptance_rate = out.acceptance_rate;
  chain.seed = cfg.seed;
  chain.burn_in = cfg.burn_in;
  chain.thin = cfg.thin;
  chain.chains = out.chains;
  chain.beta_dim = beta_dim;
  chain.rhat = out.rhat;
  return chain;
}

}  // namespace

void ParamPrior::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) throw InvalidInput("prior parameters must be finite");
  if (kind == Kind::Uniform && !(a < b)) throw InvalidInput("uniform prior needs lo < hi");
  if (kind == Kind::Normal && !(b > 0.0)) throw InvalidInput("normal prior needs sigma > 0");
}

double ParamPrior::log_density(double x) const {
  if (kind == Kind::Uniform) return (x >= a && x <= b) ? -std::log(b - a) : kNegInf;
  const double z = (x - a) / b;
  return -0.5 * z * z - std::log(b) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double ParamPrior::gradient(double x) const {
  return kind == Kind::Uniform ? 0.0 : -(x - a) / (b * b);
}

double ParamPrior::sample(std::mt19937_64& rng) const {
  if (kind == Kind::Uniform) return std::uniform_real_distribution<double>(a, b)(rng);
  return std::normal_distribution<double>(a, b)(rng);
}

double ParamPrior::cdf(double x) const {
  if (kind == Kind::Uniform) return std::clamp((x - a) / (b - a), 0.0, 1.0);
  return 0.5 * std::erfc(-(x - a) / (b * std::numbers::sqrt2));
}

double ParamPrior::scale() const { return kind == Kind::Uniform ? (b - a) / std::sqrt(12.0) : b; }

void PriorSpec::validate() const {
  if (beta.empty()) throw InvalidInput("prior needs at least one parameter");
  for (const auto& p : beta) p.validate();
  if (!(xi_sigma > 0.0)) throw InvalidInput("xi prior sigma must be positive");
}

void LikelihoodSpec::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("likelihood sigma must be positive");
  shooting.validate();
}

CalibrationProblem::CalibrationProblem(const SurrogateModel& model, Shape q_mes, LikelihoodSpec spec)
    : model_(&model), q_mes_(std::move(q_mes)), spec_(std::move(spec)) {
  spec_.validate();
  validate(q_mes_);
  if (model.latent_dim() == 0) throw InvalidInput("surrogate has no latent components");
  if (spec_.include_data_term) {
    if (model.momentum.empty()) throw InvalidInput("data term needs a surrogate trained with momenta");
    if (model.momentum.components.cols() != dof_count(q_mes_)) {
      throw InvalidInput("measurement does not match the surrogate's training representation");
    }
  }
  c_mean_ = model.basis.components * model.basis.mean;
}

Shape CalibrationProblem::pushforward(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd pi0 = momentum_from_latent(*model_, u);
  const Trajectory traj = integrate_geodesic(q_mes_, pi0, spec_.shooting);
  return with_dofs(q_mes_, traj.states.back().q);
}

LikelihoodTerms CalibrationProblem::terms(const Eigen::VectorXd& beta, const Eigen::VectorXd& xi,
                                          Eigen::VectorXd* grad_beta,
                                          Eigen::VectorXd* grad_xi) const {
  if (xi.size() != xi_dim()) throw InvalidInput("xi size does not match the discrepancy setting");
  const bool want = grad_beta || grad_xi;
  const LatentPrediction lp = predict_latent(*model_, beta, want);
  const Eigen::VectorXd zmin = z_min();

  LikelihoodTerms t;
  t.u_effective = lp.mean;
  if (xi.size() > 0) t.u_effective -= xi.cwiseProduct(zmin);
  const Eigen::VectorXd z = t.u_effective + c_mean_;
  Eigen::VectorXd denom = model_->basis.explained_variance;
  if (spec_.include_model_error) denom += lp.variance;
  if ((denom.array() <= 0.0).any()) throw NumericalFailure("non-positive latent variance");
  t.deformation = -0.5 * (z.array().square() / denom.array()).sum();
  if (spec_.include_model_error) t.deformation -= 0.5 * denom.array().log().sum();

  // d deformation / d z and d / d denom
  const Eigen::VectorXd dz = -(z.array() / denom.array()).matrix();
  Eigen::VectorXd du = dz;
  if (grad_beta) {
    *grad_beta = lp.mean_jacobian.transpose() * dz;
    if (spec_.include_model_error) {
      const Eigen::VectorXd dd =
          (0.5 * z.array().square() / denom.array().square() - 0.5 / denom.array()).matrix();
      *grad_beta += lp.variance_jacobian.transpose() * dd;
    }
  }

  if (spec_.include_data_term) {
    const Eigen::VectorXd pi0 = momentum_from_latent(*model_, t.u_effective);
    const double c = 1.0 / (2.0 * spec_.sigma * spec_.sigma);
    if (!want) {
      const Trajectory traj = integrate_geodesic(q_mes_, pi0, spec_.shooting);
      const Shape q1 = with_dofs(q_mes_, traj.states.back().q);
      t.data = -c * match_cost(q1, q_mes_, spec_.shooting.match).cost;
    } else {
      ShootingConfig unit = spec_.shooting;
      unit.match.weight = 1.0;
      const ShootingLoss sl = shooting_loss(q_mes_, pi0, q_mes_, unit);
      t.data = -c * sl.match;
      const auto sys = make_system(q_mes_, spec_.shooting.kernel);
      const Eigen::VectorXd q0 = dofs(q_mes_);
      const Eigen::VectorXd dh = sys->pairing_weight() * sys->fields(q0, pi0).q;
      const Eigen::VectorXd dpi = -c * (sl.gradient - dh);
      const Eigen::VectorXd d_u = model_->momentum.components * dpi;
      if (grad_beta) *grad_beta += lp.mean_jacobian.transpose() * d_u;
      du += d_u;
    }
  }
  if (grad_xi) {
    if (xi.size() > 0) {
      *grad_xi = -du.cwiseProduct(zmin);
    } else {
      grad_xi->resize(0);
    }
  }
  return t;
}

double CalibrationProblem::log_likelihood(const Eigen::VectorXd& beta, const Eigen::VectorXd& xi) const {
  return terms(beta, xi).total();
}

double log_likelihood(const Eigen::VectorXd& beta, const Eigen::VectorXd& xi,
                      const SurrogateModel& model, const Shape& q_mes, const LikelihoodSpec& spec) {
  return CalibrationProblem(model, q_mes, spec).log_likelihood(beta, xi);
}

std::vector<std::string> PosteriorChain::column_names() const {
  std::vector<std::string> names;
  for (int j = 0; j < beta_dim; ++j) names.push_back("beta_" + std::to_string(j + 1));
  for (int j = 0; j < xi_dim(); ++j) names.push_back("xi_" + std::to_string(j + 1));
  return names;
}

namespace {

using Likelihood = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::VectorXd*,
                                         Eigen::VectorXd*)>;

ParamPrior param_prior(const PriorSpec& prior, int j) {
  const int p = static_cast<int>(prior.beta.size());
  return j < p ? prior.beta[j] : ParamPrior::normal(1.0, prior.xi_sigma);
}

// Log posterior on (beta, xi); non-finite or failing likelihoods give -inf.
LogDensityFn posterior_target(const PriorSpec& prior, int xi_dim, Likelihood lik) {
  const int p = static_cast<int>(prior.beta.size());
  return [prior, xi_dim, p, lik = std::move(lik)](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const int dim = p + xi_dim;
    double lp = 0.0;
    for (int j = 0; j < dim; ++j) lp += param_prior(prior, j).log_density(x(j));
    if (!std::isfinite(lp)) return kNegInf;
    Eigen::VectorXd gb, gx;
    double ll;
    try {
      ll = lik(x.head(p), x.tail(xi_dim), grad ? &gb : nullptr, grad ? &gx : nullptr);
    } catch (const NumericalFailure&) {
      return kNegInf;
    }
    if (!std::isfinite(ll)) return kNegInf;
    if (grad) {
      grad->resize(dim);
      for (int j = 0; j < dim; ++j) (*grad)(j) = param_prior(prior, j).gradient(x(j));
      if (gb.size() == p) grad->head(p) += gb;
      if (gx.size() == xi_dim) grad->tail(xi_dim) += gx;
    }
    return lp + ll;
  };
}

Likelihood problem_likelihood(const CalibrationProblem& problem, bool enabled) {
  return [&problem, enabled](const Eigen::VectorXd& b, const Eigen::VectorXd& xi, Eigen::VectorXd* gb,
                             Eigen::VectorXd* gx) {
    if (!enabled) {
      if (gb) *gb = Eigen::VectorXd::Zero(b.size());
      if (gx) *gx = Eigen::VectorXd::Zero(xi.size());
      return 0.0;
    }
    return problem.terms(b, xi, gb, gx).total();
  };
}

PosteriorChain run(const PriorSpec& prior, int xi_dim, Likelihood lik, const McmcConfig& cfg) {
  prior.validate();
  const int p = static_cast<int>(prior.beta.size());
  const int dim = p + xi_dim;
  const LogDensityFn target = posterior_target(prior, xi_dim, std::move(lik));
  auto init = [&](std::mt19937_64& rng) {
    Eigen::VectorXd x(dim);
    for (int j = 0; j < dim; ++j) x(j) = param_prior(prior, j).sample(rng);
    return x;
  };
  Eigen::VectorXd scale(dim);
  for (int j = 0; j < dim; ++j) scale(j) = param_prior(prior, j).scale();
  return to_chain(run_adaptive_mcmc(target, init, scale, cfg), cfg, p);
}

}  // namespace

PosteriorChain sample_posterior(const PriorSpec& prior, const CalibrationProblem& problem,
                                const McmcConfig& cfg, bool likelihood_enabled) {
  if (static_cast<int>(prior.beta.size()) != problem.beta_dim()) {
    throw InvalidInput("prior dimension does not match the surrogate inputs");
  }
  return run(prior, problem.xi_dim(), problem_likelihood(problem, likelihood_enabled), cfg);
}

PosteriorChain sample_posterior(const PriorSpec& prior, const LogDensityFn& log_likelihood,
                                const McmcConfig& cfg) {
  return run(prior, 0,
             [&](const Eigen::VectorXd& b, const Eigen::VectorXd&, Eigen::VectorXd* gb,
                 Eigen::VectorXd*) { return log_likelihood(b, gb); },
             cfg);
}

MapEstimate map_estimate(const PosteriorChain& chain) {
  if (chain.samples.rows() == 0) throw InvalidInput("empty chain");
  Eigen::Index best;
  chain.log_post.maxCoeff(&best);
  MapEstimate m;
  m.beta = chain.samples.row(best).head(chain.beta_dim).transpose();
  m.xi = chain.samples.row(best).tail(chain.xi_dim()).transpose();
  m.log_post = chain.log_post(best);
  return m;
}

MapEstimate refine_map(const PosteriorChain& chain, const PriorSpec& prior, const CalibrationProblem& problem,
                       int max_iters) {
  if (static_cast<int>(prior.beta.size()) != problem.beta_dim() || chain.beta_dim != problem.beta_dim() ||
      chain.xi_dim() != problem.xi_dim()) {
    throw InvalidInput("chain, prior and problem dimensions differ");
  }
  prior.validate();
  const int p = problem.beta_dim();
  const int dim = p + problem.xi_dim();
  const LogDensityFn target = posterior_target(prior, problem.xi_dim(), problem_likelihood(problem, true));
  MapEstimate start = map_estimate(chain);
  Eigen::VectorXd x(dim), lo(dim), hi(dim), scale2(dim);
  x << start.beta, start.xi;
  for (int j = 0; j < dim; ++j) {
    const ParamPrior pj = param_prior(prior, j);
    const bool bounded = pj.kind == ParamPrior::Kind::Uniform;
    lo(j) = bounded ? pj.a : -std::numeric_limits<double>::infinity();
    hi(j) = bounded ? pj.b : std::numeric_limits<double>::infinity();
    scale2(j) = pj.scale() * pj.scale();
  }
  Eigen::VectorXd g;
  double f = target(x, &g);
  if (!std::isfinite(f)) return start;
  double step = 1e-2;
  for (int it = 0; it < max_iters && step > 1e-14; ++it) {
    const Eigen::VectorXd trial = (x + step * scale2.cwiseProduct(g)).cwiseMax(lo).cwiseMin(hi);
    Eigen::VectorXd gt;
    const double ft = target(trial, &gt);
    if (std::isfinite(ft) && ft > f) {
      const bool stalled = ft - f < 1e-12 * (1.0 + std::abs(f));
      x = trial;
      f = ft;
      g = gt;
      step *= 2.0;
      if (stalled) break;
    } else {
      step *= 0.5;
    }
  }
  return MapEstimate{x.head(p), x.tail(dim - p), f};
}

std::vector<MarginalSummary> summarize_marginals(const PosteriorChain& chain) {
  if (chain.samples.rows() == 0) throw InvalidInput("empty chain");
  const auto names = chain.column_names();
  std::vector<MarginalSummary> out;
  const double n = static_cast<double>(chain.samples.rows());
  for (Eigen::Index j = 0; j < chain.samples.cols(); ++j) {
    const Eigen::VectorXd col = chain.samples.col(j);
    MarginalSummary s;
    s.name = names[j];
    s.mean = col.mean();
    s.sd = n > 1 ? std::sqrt((col.array() - s.mean).square().sum() / (n - 1.0)) : 0.0;
    std::vector<double> v(col.data(), col.data() + col.size());
    s.q025 = quantile(v, 0.025);
    s.q975 = quantile(v, 0.975);
    out.push_back(s);
  }
  return out;
}

PredictiveSummary summarize_shapes(const std::vector<Shape>& shapes) {
  if (shapes.empty()) throw InvalidInput("no shapes to summarize");
  const Eigen::Index d = dof_count(shapes.front());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
  for (const Shape& s : shapes) {
    const Eigen::VectorXd x = dofs(s);
    if (x.size() != d) throw InvalidInput("shapes to summarize differ in size");
    sum += x;
  }
  const double n = static_cast<double>(shapes.size());
  PredictiveSummary out;
  out.mean_dofs = sum / n;
  for (const Shape& s : shapes) sq += (dofs(s) - out.mean_dofs).array().square().matrix();
  out.std_dofs = (sq / n).cwiseSqrt();
  out.mean = with_dofs(shapes.front(), out.mean_dofs);
  out.std = with_dofs(shapes.front(), out.std_dofs);
  out.used = static_cast<int>(shapes.size());
  return out;
}

PredictiveSummary posterior_predictive(const PosteriorChain& chain, const CalibrationProblem& problem,
                                       int n_draws, int jobs) {
  const Eigen::Index n = chain.samples.rows();
  if (n_draws < 1 || n_draws > n) throw InvalidInput("n_draws must be in [1, chain length]");
  if (chain.beta_dim != problem.beta_dim() || chain.xi_dim() != problem.xi_dim()) {
    throw InvalidInput("chain does not match the calibration problem");
  }
  if (problem.model().momentum.empty()) throw InvalidInput("surrogate was trained without momenta");
  std::vector<Shape> shapes(n_draws);
  std::vector<double> energies(n_draws, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> ok(n_draws, 0);
  const KernelSpec& kernel = problem.spec().shooting.kernel;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int k; (k = next++) < n_draws;) {
      const Eigen::Index row = n_draws == 1 ? n - 1 : (k * (n - 1)) / (n_draws - 1);
      const Eigen::VectorXd beta = chain.samples.row(row).head(chain.beta_dim).transpose();
      const Eigen::VectorXd xi = chain.samples.row(row).tail(chain.xi_dim()).transpose();
      try {
        Eigen::VectorXd u = predict_latent(problem.model(), beta).mean;
        if (xi.size() > 0) u -= xi.cwiseProduct(problem.z_min());
        const Eigen::VectorXd pi0 = momentum_from_latent(problem.model(), u);
        shapes[k] = problem.pushforward(u);
        energies[k] = 2.0 * hamiltonian(problem.measurement(), pi0, kernel);
        ok[k] = 1;
      } catch (const NumericalFailure&) {
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(jobs, n_draws); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<Shape> good;
  std::vector<double> good_e;
  for (int k = 0; k < n_draws; ++k) {
    if (ok[k]) {
      good.push_back(std::move(shapes[k]));
      good_e.push_back(energies[k]);
    }
  }
  const int skipped = n_draws - static_cast<int>(good.size());
  if (good.empty() || skipped > 0.1 * n_draws) {
    throw NumericalFailure(std::to_string(skipped) + " of " + std::to_string(n_draws) +
                           " posterior draws failed to integrate");
  }
  PredictiveSummary out = summarize_shapes(good);
  out.energies = std::move(good_e);
  out.skipped = skipped;
  return out;
}

GridImage rescale_unit(const GridImage& image) {
  const double lo = image.values.minCoeff(), hi = image.values.maxCoeff();
  GridImage out = image;
  if (hi > lo) out.values = (image.values.array() - lo) / (hi - lo);
  else out.values.setZero();
  return out;
}

}  // namespace diffcal
