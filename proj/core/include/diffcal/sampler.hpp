#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <random>

namespace diffcal {

// Log target density; fills `gradient` when it is non-null. Returns -inf
// outside the support.
using LogDensityFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* gradient)>;

struct McmcConfig {
  int chains = 4;
  int iterations = 5000;  // kept per chain, before thinning
  int burn_in = 2000;
  int thin = 1;
  std::uint64_t seed = 0;
  bool mala = false;
  double initial_scale = 0.1;  // proposal std relative to the initial covariance
  int jobs = 1;

  double target_acceptance() const { return mala ? 0.574 : 0.234; }
  void validate() const;
};

struct ChainOutput {
  Eigen::MatrixXd samples;  // (chains * kept) x dim, chain after chain
  Eigen::VectorXd log_density;
  double acceptance_rate = 0.0;  // post burn-in, all chains
  Eigen::VectorXd rhat;          // split R-hat per coordinate; empty for one chain
  int chains = 0;
};

// Adaptive Metropolis: proposal covariance from the running sample covariance
// and a Robbins-Monro global scale, both frozen after burn-in. With cfg.mala the
// proposal is the preconditioned Langevin step and needs gradients.
// `init(rng)` draws a starting point inside the support, `scale` is the initial
// per-coordinate proposal standard deviation.
ChainOutput run_adaptive_mcmc(const LogDensityFn& target,
                              const std::function<Eigen::VectorXd(std::mt19937_64&)>& init,
                              const Eigen::VectorXd& scale, const McmcConfig& cfg);

// Split R-hat of `chains` equal consecutive blocks of `draws`.
double split_rhat(const Eigen::VectorXd& draws, int chains);

// Initial-positive-sequence effective sample size of one series.
double effective_sample_size(const Eigen::VectorXd& series);

}  // namespace diffcal
