#include "diffcal/sampler.hpp"

#include <Eigen/Cholesky>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

#include "diffcal/error.hpp"

namespace diffcal {
namespace {

struct SingleChain {
  Eigen::MatrixXd samples;
  Eigen::VectorXd log_density;
  long accepted = 0;
  long proposed = 0;
};

Eigen::MatrixXd safe_cholesky(const Eigen::MatrixXd& cov) {
  Eigen::MatrixXd c = cov;
  const double base = std::max(cov.diagonal().mean(), 1e-300);
  for (double jitter = 1e-10; jitter < 1.0; jitter *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    c = cov;
    c.diagonal().array() += jitter * base;
  }
  return cov.diagonal().cwiseSqrt().asDiagonal();
}

SingleChain run_chain(const LogDensityFn& target,
                      const std::function<Eigen::VectorXd(std::mt19937_64&)>& init,
                      const Eigen::VectorXd& scale, const McmcConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index d = scale.size();
  auto gaussian = [&] {
    Eigen::VectorXd e(d);
    for (Eigen::Index i = 0; i < d; ++i) e(i) = normal(rng);
    return e;
  };

  Eigen::VectorXd x = init(rng);
  if (x.size() != d) throw InvalidInput("MCMC start point has the wrong dimension");
  Eigen::VectorXd grad;
  double lp = target(x, cfg.mala ? &grad : nullptr);
  for (int tries = 0; !std::isfinite(lp) && tries < 100; ++tries) {
    x = init(rng);
    lp = target(x, cfg.mala ? &grad : nullptr);
  }
  if (!std::isfinite(lp)) throw NumericalFailure("MCMC could not find a start point with finite density");

  // Proposal: x + s L e (RWM) or x + (s^2 / 2) S grad + s L e (MALA), S = L L^T.
  Eigen::MatrixXd cov = scale.array().square().matrix().asDiagonal();
  Eigen::MatrixXd chol = safe_cholesky(cov);
  double log_s = std::log(cfg.mala ? 1.0 : 2.38 / std::sqrt(static_cast<double>(d)));
  Eigen::VectorXd run_mean = x;
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(d, d);
  long count = 1;
  const double target_acc = cfg.target_acceptance();

  SingleChain out;
  const int kept = cfg.iterations / cfg.thin;
  out.samples.resize(kept, d);
  out.log_density.resize(kept);
  long burn_accepted = 0;
  const int total = cfg.burn_in + cfg.iterations;
  for (int it = 0; it < total; ++it) {
    const double s = std::exp(log_s);
    Eigen::VectorXd drift_x = Eigen::VectorXd::Zero(d);
    if (cfg.mala) drift_x = 0.5 * s * s * (chol * (chol.transpose() * grad));
    const Eigen::VectorXd xn = x + drift_x + s * (chol * gaussian());
    Eigen::VectorXd gradn;
    const double lpn = target(xn, cfg.mala ? &gradn : nullptr);
    double log_ratio = lpn - lp;
    if (cfg.mala && std::isfinite(lpn)) {
      // q(x | xn) / q(xn | x) under N(mean, s^2 S).
      const Eigen::VectorXd back = x - xn - 0.5 * s * s * (chol * (chol.transpose() * gradn));
      const Eigen::VectorXd fwd = xn - x - drift_x;
      const auto solve = [&](const Eigen::VectorXd& r) {
        return chol.triangularView<Eigen::Lower>().solve(r).squaredNorm();
      };
      log_ratio += -0.5 * solve(back) / (s * s) + 0.5 * solve(fwd) / (s * s);
    }
    const double acc = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
    const bool accept = unif(rng) < acc;
    if (accept) {
      x = xn;
      lp = lpn;
      grad = gradn;
    }
    if (it < cfg.burn_in) {
      burn_accepted += accept;
      ++count;
      const Eigen::VectorXd delta = x - run_mean;
      run_mean += delta / static_cast<double>(count);
      run_m2 += delta * (x - run_mean).transpose();
      log_s += std::pow(static_cast<double>(it + 1), -0.6) * (acc - target_acc);
      if (count > 2 * d + 10 && (it + 1) % 50 == 0) {
        cov = run_m2 / static_cast<double>(count - 1);
        cov.diagonal() += 1e-10 * scale.array().square().matrix();
        chol = safe_cholesky(cov);
      }
      if (it + 1 == cfg.burn_in && burn_accepted == 0) {
        throw NumericalFailure("MCMC accepted no proposal during burn-in; reduce the proposal scale");
      }
    } else {
      ++out.proposed;
      out.accepted += accept;
      const int k = it - cfg.burn_in;
      if (k % cfg.thin == 0 && k / cfg.thin < kept) {
        out.samples.row(k / cfg.thin) = x.transpose();
        out.log_density(k / cfg.thin) = lp;
      }
    }
  }
  return out;
}

}  // namespace

void McmcConfig::validate() const {
  if (chains < 1 || iterations < 1 || burn_in < 0 || thin < 1 || iterations < thin) {
    throw InvalidInput("invalid MCMC configuration");
  }
  if (!(initial_scale > 0.0)) throw InvalidInput("MCMC initial scale must be positive");
}

ChainOutput run_adaptive_mcmc(const LogDensityFn& target,
                              const std::function<Eigen::VectorXd(std::mt19937_64&)>& init,
                              const Eigen::VectorXd& scale, const McmcConfig& cfg) {
  cfg.validate();
  if (scale.size() == 0 || (scale.array() <= 0.0).any()) {
    throw InvalidInput("MCMC proposal scales must be positive");
  }
  std::vector<SingleChain> chains(cfg.chains);
  std::seed_seq seq{cfg.seed};
  std::vector<std::uint64_t> seeds(cfg.chains);
  {
    std::vector<std::uint32_t> raw(2 * cfg.chains);
    seq.generate(raw.begin(), raw.end());
    for (int c = 0; c < cfg.chains; ++c) {
      seeds[c] = (static_cast<std::uint64_t>(raw[2 * c]) << 32) | raw[2 * c + 1];
    }
  }
  const Eigen::VectorXd start_scale = cfg.initial_scale * scale;
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (int c; (c = next++) < cfg.chains;) {
      try {
        chains[c] = run_chain(target, init, start_scale, cfg, seeds[c]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min(cfg.jobs, cfg.chains); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ChainOutput out;
  out.chains = cfg.chains;
  const Eigen::Index kept = chains.front().samples.rows(), d = scale.size();
  out.samples.resize(kept * cfg.chains, d);
  out.log_density.resize(kept * cfg.chains);
  long acc = 0, prop = 0;
  for (int c = 0; c < cfg.chains; ++c) {
    out.samples.middleRows(c * kept, kept) = chains[c].samples;
    out.log_density.segment(c * kept, kept) = chains[c].log_density;
    acc += chains[c].accepted;
    prop += chains[c].proposed;
  }
  out.acceptance_rate = prop > 0 ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0;
  if (cfg.chains >= 2) {
    out.rhat.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) out.rhat(j) = split_rhat(out.samples.col(j), cfg.chains);
  }
  return out;
}

double split_rhat(const Eigen::VectorXd& draws, int chains) {
  if (chains < 1 || draws.size() % chains != 0) throw InvalidInput("split_rhat: uneven chains");
  const Eigen::Index len = draws.size() / chains;
  const Eigen::Index half = len / 2;
  if (half < 2) return std::numeric_limits<double>::quiet_NaN();
  const int m = 2 * chains;
  Eigen::VectorXd means(m), vars(m);
  for (int c = 0; c < chains; ++c) {
    for (int h = 0; h < 2; ++h) {
      const Eigen::VectorXd seg = draws.segment(c * len + h * half, half);
      const int k = 2 * c + h;
      means(k) = seg.mean();
      vars(k) = (seg.array() - means(k)).square().sum() / static_cast<double>(half - 1);
    }
  }
  const double n = static_cast<double>(half);
  const double b = n * (means.array() - means.mean()).square().sum() / (m - 1.0);
  const double w = vars.mean();
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(((n - 1.0) / n * w + b / n) / w);
}

double effective_sample_size(const Eigen::VectorXd& series) {
  const Eigen::Index n = series.size();
  if (n < 4) return static_cast<double>(n);
  const Eigen::ArrayXd c = series.array() - series.mean();
  const double var = c.square().mean();
  if (var <= 0.0) return static_cast<double>(n);
  auto rho = [&](Eigen::Index lag) {
    return (c.head(n - lag) * c.tail(n - lag)).sum() / (static_cast<double>(n) * var);
  };
  double sum = 0.0;
  for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
    const double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = std::max(2.0 * sum - 1.0, 1e-3);
  return static_cast<double>(n) / tau;
}

}  // namespace diffcal
