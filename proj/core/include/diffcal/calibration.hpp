#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffcal/sampler.hpp"
#include "diffcal/shapes.hpp"
#include "diffcal/shooting.hpp"
#include "diffcal/surrogate.hpp"

namespace diffcal {

struct ParamPrior {
  enum class Kind { Uniform, Normal };
  Kind kind = Kind::Uniform;
  double a = 0.0;  // lower bound or mean
  double b = 1.0;  // upper bound or standard deviation

  static ParamPrior uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static ParamPrior normal(double mu, double sigma) { return {Kind::Normal, mu, sigma}; }

  void validate() const;
  double log_density(double x) const;  // up to a constant; -inf outside support
  double gradient(double x) const;
  double sample(std::mt19937_64& rng) const;
  double cdf(double x) const;
  double scale() const;  // a typical spread
};

struct PriorSpec {
  std::vector<ParamPrior> beta;
  double xi_sigma = 0.1;  // xi_j ~ N(1, xi_sigma^2)

  void validate() const;
};

struct LikelihoodSpec {
  double sigma = 0.05;  // L2 observation scale
  bool include_model_error = false;
  bool include_discrepancy = false;
  bool include_data_term = true;
  // Shooting of q_mes by the predicted momentum for the data term.
  ShootingConfig shooting{};

  void validate() const;
};

// Latent deformation coordinates z = C v (uncentred), so that z = 0 is the
// identity deformation. z_mod(beta) = u_mod(beta) + C mean.
struct LikelihoodTerms {
  double deformation = 0.0;
  double data = 0.0;
  double total() const { return deformation + data; }
  Eigen::VectorXd u_effective;  // centred latent code actually pushed forward
};

class CalibrationProblem {
 public:
  CalibrationProblem(const SurrogateModel& model, Shape q_mes, LikelihoodSpec spec);

  int beta_dim() const { return model_->input_dim(); }
  int xi_dim() const { return spec_.include_discrepancy ? model_->latent_dim() : 0; }

  // xi may be empty when the discrepancy is off. Gradients on request.
  LikelihoodTerms terms(const Eigen::VectorXd& beta, const Eigen::VectorXd& xi,
                        Eigen::VectorXd* grad_beta = nullptr,
                        Eigen::VectorXd* grad_xi = nullptr) const;
  double log_likelihood(const Eigen::VectorXd& beta, const Eigen::VectorXd& xi) const;

  // q_mes deformed by the initial momentum of latent code u.
  Shape pushforward(const Eigen::VectorXd& u) const;

  const SurrogateModel& model() const { return *model_; }
  const Shape& measurement() const { return q_mes_; }
  const LikelihoodSpec& spec() const { return spec_; }
  const Eigen::VectorXd& latent_offset() const { return c_mean_; }  // C mean
  Eigen::VectorXd z_min() const { return model_->u_min + c_mean_; }

 private:
  const SurrogateModel* model_;
  Shape q_mes_;
  LikelihoodSpec spec_;
  Eigen::VectorXd c_mean_;
};

double log_likelihood(const Eigen::VectorXd& beta, const Eigen::VectorXd& xi,
                      const SurrogateModel& model, const Shape& q_mes, const LikelihoodSpec& spec);

struct PosteriorChain {
  Eigen::MatrixXd samples;  // N x (p + P'), beta then active xi
  Eigen::VectorXd log_post;
  double acceptance_rate = 0.0;
  std::uint64_t seed = 0;
  int burn_in = 0;
  int thin = 1;
  int chains = 1;
  int beta_dim = 0;
  Eigen::VectorXd rhat;

  int xi_dim() const { return static_cast<int>(samples.cols()) - beta_dim; }
  std::vector<std::string> column_names() const;
};

// likelihood_enabled = false samples the prior.
PosteriorChain sample_posterior(const PriorSpec& prior, const CalibrationProblem& problem,
                                const McmcConfig& cfg, bool likelihood_enabled = true);

// Generic entry point for a user-supplied log-likelihood on the beta block.
PosteriorChain sample_posterior(const PriorSpec& prior, const LogDensityFn& log_likelihood,
                                const McmcConfig& cfg);

struct MapEstimate {
  Eigen::VectorXd beta;
  Eigen::VectorXd xi;
  double log_post = 0.0;
};

MapEstimate map_estimate(const PosteriorChain& chain);

// Projected gradient ascent on the log posterior from the best chain sample.
MapEstimate refine_map(const PosteriorChain& chain, const PriorSpec& prior, const CalibrationProblem& problem,
                       int max_iters = 200);

struct MarginalSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, q025 = 0.0, q975 = 0.0;
};

std::vector<MarginalSummary> summarize_marginals(const PosteriorChain& chain);

struct PredictiveSummary {
  Shape mean;
  Shape std;
  Eigen::VectorXd mean_dofs;
  Eigen::VectorXd std_dofs;
  std::vector<double> energies;  // 2 H0 per used draw
  int used = 0;
  int skipped = 0;
};

// Evenly spaced draws over the chain, pushed forward from q_mes.
PredictiveSummary posterior_predictive(const PosteriorChain& chain, const CalibrationProblem& problem,
                                       int n_draws, int jobs = 1);

// Pointwise mean and standard deviation of a list of shapes of one kind.
PredictiveSummary summarize_shapes(const std::vector<Shape>& shapes);

// Affine map of the image values onto [0, 1].
GridImage rescale_unit(const GridImage& image);

}  // namespace diffcal
