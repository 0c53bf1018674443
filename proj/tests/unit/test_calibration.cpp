#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "diffcal/calibration.hpp"
#include "diffcal/error.hpp"
#include "diffcal/sampler.hpp"
#include "test_helpers.hpp"

namespace diffcal {
namespace {

const KernelSpec kKernel{KernelFamily::Gaussian, 0.6, 1.0};

LandmarkShape reference_shape() {
  PointSet p(5, 2);
  p << 0.0, 0.0, 1.0, 0.1, 0.5, 0.9, -0.4, 0.6, 0.2, -0.7;
  return LandmarkShape{p};
}

// Momenta depend smoothly on a 2-vector beta; velocities follow from the kernel.
std::vector<VelocityRecord> landmark_records(int n, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const LandmarkShape q = reference_shape();
  std::vector<VelocityRecord> out;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d b(u(rng), u(rng));
    Eigen::VectorXd pi(10);
    for (int k = 0; k < 5; ++k) {
      pi(2 * k) = scale * (b(0) - 0.4 + 0.2 * std::sin(k + 3 * b(1)));
      pi(2 * k + 1) = scale * (b(1) - 0.5 + 0.1 * k * b(0));
    }
    const Eigen::VectorXd v = initial_velocity(q, pi, kKernel);
    out.push_back({b, v, 2.0 * hamiltonian(q, pi, kKernel), pi});
  }
  return out;
}

LikelihoodSpec spec(bool me, bool disc, bool data) {
  LikelihoodSpec s;
  s.sigma = 0.2;
  s.include_model_error = me;
  s.include_discrepancy = disc;
  s.include_data_term = data;
  s.shooting.kernel = kKernel;
  s.shooting.num_steps = 10;
  return s;
}

PriorSpec unit_prior(int p) {
  PriorSpec prior;
  for (int j = 0; j < p; ++j) prior.beta.push_back(ParamPrior::uniform(0.0, 1.0));
  return prior;
}

class CalibrationFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { model_ = new SurrogateModel(fit_surrogate(landmark_records(30, 1))); }
  static void TearDownTestSuite() { delete model_; }
  static SurrogateModel* model_;
};
SurrogateModel* CalibrationFixture::model_ = nullptr;

TEST_F(CalibrationFixture, DeformationTermMatchesDenseGaussian) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int P = model_->latent_dim();
  for (bool me : {false, true}) {
    for (bool disc : {false, true}) {
      const CalibrationProblem prob(*model_, reference_shape(), spec(me, disc, false));
      for (int trial = 0; trial < 5; ++trial) {
        const Eigen::Vector2d b(u(rng), u(rng));
        Eigen::VectorXd xi(disc ? P : 0);
        for (Eigen::Index j = 0; j < xi.size(); ++j) xi(j) = 0.5 + u(rng);
        // Oracle: explicit Gaussian log-density in latent space.
        const LatentPrediction lp = predict_latent(*model_, b);
        Eigen::VectorXd z = lp.mean + model_->basis.components * model_->basis.mean;
        if (disc) z -= xi.cwiseProduct(model_->u_min + model_->basis.components * model_->basis.mean);
        Eigen::MatrixXd cov = model_->basis.explained_variance.asDiagonal();
        if (me) cov += lp.variance.asDiagonal().toDenseMatrix();
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        double oracle = -0.5 * z.dot(llt.solve(z));
        if (me) oracle -= llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const double got = prob.terms(b, xi).deformation;
        EXPECT_NEAR(got, oracle, 1e-10 * std::max(1.0, std::abs(oracle)));
        EXPECT_EQ(prob.log_likelihood(b, xi), got);
      }
    }
  }
}

TEST_F(CalibrationFixture, DiscrepancyCancelsDeformation) {
  const CalibrationProblem prob(*model_, reference_shape(), spec(false, true, false));
  const Eigen::Vector2d b(0.3, 0.8);
  const Eigen::VectorXd zmod = predict_latent(*model_, b).mean + prob.latent_offset();
  const Eigen::VectorXd xi = zmod.cwiseQuotient(prob.z_min());
  EXPECT_NEAR(prob.terms(b, xi).deformation, 0.0, 1e-20);
}

TEST_F(CalibrationFixture, DiscrepancyNestsTheDeformationTerm) {
  // With xi free the best deformation term is at least the one without xi.
  const CalibrationProblem plain(*model_, reference_shape(), spec(false, false, false));
  const CalibrationProblem disc(*model_, reference_shape(), spec(false, true, false));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector2d b(u(rng), u(rng));
    const double base = plain.terms(b, {}).deformation;
    const Eigen::VectorXd zmod = predict_latent(*model_, b).mean + disc.latent_offset();
    const double best = disc.terms(b, zmod.cwiseQuotient(disc.z_min())).deformation;
    const double at_zero = disc.terms(b, Eigen::VectorXd::Zero(model_->latent_dim())).deformation;
    EXPECT_GE(best, base);
    EXPECT_NEAR(at_zero, base, 1e-12 * std::abs(base));
  }
}

TEST_F(CalibrationFixture, DataTermIsPushforwardMismatch) {
  const LikelihoodSpec s = spec(false, false, true);
  const CalibrationProblem prob(*model_, reference_shape(), s);
  const Eigen::Vector2d b(0.6, 0.2);
  const LikelihoodTerms t = prob.terms(b, {});
  const Shape q1 = prob.pushforward(t.u_effective);
  const double c = match_cost(q1, reference_shape(), s.shooting.match).cost;
  EXPECT_NEAR(t.data, -c / (2 * s.sigma * s.sigma), 1e-14);
  EXPECT_LE(t.data, 0.0);
  // The zero-deformation code maps q_mes onto itself.
  const Eigen::VectorXd u0 = -prob.latent_offset();
  EXPECT_EQ(match_cost(prob.pushforward(u0), reference_shape(), s.shooting.match).cost, 0.0);
}

TEST_F(CalibrationFixture, GradientsMatchFiniteDifferences) {
  const int P = model_->latent_dim();
  const CalibrationProblem prob(*model_, reference_shape(), spec(true, true, true));
  const Eigen::Vector2d b(0.45, 0.55);
  Eigen::VectorXd xi = Eigen::VectorXd::LinSpaced(P, 0.8, 1.2);
  Eigen::VectorXd gb, gx;
  prob.terms(b, xi, &gb, &gx);
  const Eigen::VectorXd fdb = testing::central_difference(
      [&](const Eigen::VectorXd& x) { return prob.log_likelihood(x, xi); }, b, 1e-4);
  const Eigen::VectorXd fdx = testing::central_difference(
      [&](const Eigen::VectorXd& x) { return prob.log_likelihood(b, x); }, xi, 1e-4);
  EXPECT_LT(testing::relative_error(gb, fdb), 1e-5);
  EXPECT_LT(testing::relative_error(gx, fdx), 1e-5);
}

TEST_F(CalibrationFixture, RejectsMismatchedInputs) {
  EXPECT_THROW(CalibrationProblem(*model_, LandmarkShape{PointSet::Zero(3, 2)}, spec(false, false, true)),
               InvalidInput);
  const CalibrationProblem prob(*model_, reference_shape(), spec(false, true, false));
  EXPECT_THROW(prob.terms(Eigen::Vector2d(0.5, 0.5), {}), InvalidInput);
  LikelihoodSpec bad = spec(false, false, false);
  bad.sigma = 0.0;
  EXPECT_THROW(CalibrationProblem(*model_, reference_shape(), bad), InvalidInput);
}

double ks_distance(Eigen::VectorXd x, const ParamPrior& prior) {
  std::sort(x.data(), x.data() + x.size());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double f = prior.cdf(x(i));
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

TEST_F(CalibrationFixture, PriorRecoveryWithLikelihoodDisabled) {
  PriorSpec prior;
  prior.beta = {ParamPrior::uniform(0.0, 0.5), ParamPrior::normal(0.3, 0.1)};
  const CalibrationProblem prob(*model_, reference_shape(), spec(false, true, false));
  McmcConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 5000;
  cfg.burn_in = 2000;
  cfg.seed = 11;
  const PosteriorChain chain = sample_posterior(prior, prob, cfg, false);
  ASSERT_EQ(chain.samples.rows(), 20000);
  EXPECT_LT(ks_distance(chain.samples.col(0), prior.beta[0]), 0.05);
  EXPECT_LT(ks_distance(chain.samples.col(1), prior.beta[1]), 0.05);
  for (int j = 0; j < chain.xi_dim(); ++j) {
    EXPECT_LT(ks_distance(chain.samples.col(2 + j), ParamPrior::normal(1.0, prior.xi_sigma)), 0.05);
  }
  EXPECT_GE(chain.samples.col(0).minCoeff(), 0.0);
  EXPECT_LE(chain.samples.col(0).maxCoeff(), 0.5);
  ASSERT_EQ(chain.rhat.size(), chain.samples.cols());
  EXPECT_LT(chain.rhat.maxCoeff(), 1.05);
}

// Normal prior N(m0, t0^2) per coordinate, Gaussian likelihood N(y; beta, s^2):
// posterior N((m0/t0^2 + y/s^2) / (1/t0^2 + 1/s^2), 1 / (1/t0^2 + 1/s^2)).
void check_conjugate(bool mala) {
  const Eigen::Vector3d m0(0.0, 1.0, -0.5), t0(1.0, 0.5, 2.0), y(0.7, 0.2, 0.1), s(0.3, 0.6, 0.2);
  PriorSpec prior;
  for (int j = 0; j < 3; ++j) prior.beta.push_back(ParamPrior::normal(m0(j), t0(j)));
  const LogDensityFn lik = [&](const Eigen::VectorXd& b, Eigen::VectorXd* g) {
    const Eigen::ArrayXd r = (b - y).array() / s.array();
    if (g) *g = -(r / s.array()).matrix();
    return -0.5 * r.square().sum();
  };
  McmcConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 10000;
  cfg.burn_in = 3000;
  cfg.seed = 5;
  cfg.mala = mala;
  const PosteriorChain chain = sample_posterior(prior, lik, cfg);
  for (int j = 0; j < 3; ++j) {
    const double prec = 1.0 / (t0(j) * t0(j)) + 1.0 / (s(j) * s(j));
    const double mu = (m0(j) / (t0(j) * t0(j)) + y(j) / (s(j) * s(j))) / prec;
    const double var = 1.0 / prec;
    const Eigen::VectorXd x = chain.samples.col(j);
    const Eigen::VectorXd sq = (x.array() - mu).square();
    const int len = static_cast<int>(x.size()) / cfg.chains;
    double ess_x = 0.0, ess_sq = 0.0;
    for (int c = 0; c < cfg.chains; ++c) {
      ess_x += effective_sample_size(x.segment(c * len, len));
      ess_sq += effective_sample_size(sq.segment(c * len, len));
    }
    const double mcse_mean = std::sqrt(var / ess_x);
    const double sd_sq = std::sqrt((sq.array() - sq.mean()).square().mean());
    const double mcse_var = sd_sq / std::sqrt(ess_sq);
    EXPECT_NEAR(x.mean(), mu, 3.0 * mcse_mean) << "coordinate " << j;
    EXPECT_NEAR(sq.mean(), var, 3.0 * mcse_var) << "coordinate " << j;
  }
  EXPECT_GT(chain.acceptance_rate, mala ? 0.35 : 0.1);
  EXPECT_LT(chain.acceptance_rate, mala ? 0.85 : 0.5);
}

TEST(Sampler, ConjugateGaussianRandomWalk) { check_conjugate(false); }
TEST(Sampler, ConjugateGaussianMala) { check_conjugate(true); }

TEST(Sampler, ConstantOffsetLeavesChainUnchanged) {
  PriorSpec prior = unit_prior(2);
  const auto lik = [](double offset) {
    // Quarter-integer values keep the offset addition exact.
    return LogDensityFn([offset](const Eigen::VectorXd& b, Eigen::VectorXd*) {
      return offset - std::floor(32.0 * (b - Eigen::Vector2d(0.3, 0.6)).squaredNorm()) / 4.0;
    });
  };
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 2000;
  cfg.burn_in = 500;
  cfg.seed = 9;
  const PosteriorChain a = sample_posterior(prior, lik(0.0), cfg);
  const PosteriorChain b = sample_posterior(prior, lik(4.0), cfg);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(Sampler, SeedReproducibility) {
  PriorSpec prior = unit_prior(3);
  const LogDensityFn lik = [](const Eigen::VectorXd& b, Eigen::VectorXd*) {
    return -10.0 * (b.array() - 0.4).square().sum();
  };
  McmcConfig cfg;
  cfg.chains = 3;
  cfg.iterations = 1000;
  cfg.burn_in = 300;
  cfg.seed = 21;
  cfg.jobs = 3;
  const PosteriorChain a = sample_posterior(prior, lik, cfg);
  cfg.jobs = 1;
  const PosteriorChain b = sample_posterior(prior, lik, cfg);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.log_post, b.log_post);
  cfg.seed = 22;
  EXPECT_NE(sample_posterior(prior, lik, cfg).samples, a.samples);
}

TEST(Sampler, NoAcceptanceDuringBurnInIsAnError) {
  PriorSpec prior = unit_prior(1);
  int calls = 0;
  const LogDensityFn lik = [&calls](const Eigen::VectorXd&, Eigen::VectorXd*) {
    return calls++ == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  McmcConfig cfg;
  cfg.chains = 1;
  cfg.iterations = 10;
  cfg.burn_in = 50;
  EXPECT_THROW(sample_posterior(prior, lik, cfg), NumericalFailure);
}

TEST(Sampler, SplitRhat) {
  Eigen::VectorXd same(400);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  for (Eigen::Index i = 0; i < same.size(); ++i) same(i) = g(rng);
  EXPECT_LT(split_rhat(same, 2), 1.02);
  Eigen::VectorXd shifted = same;
  shifted.tail(200).array() += 5.0;
  EXPECT_GT(split_rhat(shifted, 2), 1.5);
}

TEST(Sampler, EffectiveSampleSize) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 20000;
  Eigen::VectorXd iid(n), ar(n);
  double a = 0.0;
  for (int i = 0; i < n; ++i) {
    iid(i) = g(rng);
    a = 0.9 * a + g(rng);
    ar(i) = a;
  }
  EXPECT_NEAR(effective_sample_size(iid) / n, 1.0, 0.1);
  // AR(1) with phi = 0.9: tau = (1 + phi) / (1 - phi) = 19.
  EXPECT_NEAR(n / effective_sample_size(ar), 19.0, 4.0);
}

TEST(MapEstimate, SingleSampleAndInjectedMaximum) {
  PosteriorChain c;
  c.beta_dim = 2;
  c.samples = Eigen::MatrixXd(1, 3);
  c.samples << 0.1, 0.2, 1.1;
  c.log_post = Eigen::VectorXd::Constant(1, -3.0);
  MapEstimate m = map_estimate(c);
  EXPECT_EQ(m.beta, Eigen::Vector2d(0.1, 0.2));
  EXPECT_EQ(m.xi, Eigen::VectorXd::Constant(1, 1.1));
  c.samples = Eigen::MatrixXd::Random(50, 3);
  c.log_post = -Eigen::VectorXd::LinSpaced(50, 1.0, 50.0);
  c.log_post(37) = 10.0;
  m = map_estimate(c);
  EXPECT_EQ(m.beta, c.samples.row(37).head(2).transpose());
  EXPECT_EQ(m.log_post, 10.0);
  c.samples.resize(0, 3);
  EXPECT_THROW(map_estimate(c), InvalidInput);
}

TEST_F(CalibrationFixture, RefinedMapImprovesOnBestSample) {
  const CalibrationProblem prob(*model_, reference_shape(), spec(false, true, false));
  const PriorSpec prior = unit_prior(2);
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 400;
  cfg.burn_in = 200;
  cfg.seed = 12;
  const PosteriorChain chain = sample_posterior(prior, prob, cfg);
  const MapEstimate best = map_estimate(chain);
  const MapEstimate m = refine_map(chain, prior, prob);
  EXPECT_GE(m.log_post, best.log_post);
  ASSERT_EQ(m.xi.size(), prob.xi_dim());
  EXPECT_TRUE((m.beta.array() >= 0.0).all() && (m.beta.array() <= 1.0).all());
  double lp = prob.terms(m.beta, m.xi).total();
  for (Eigen::Index j = 0; j < m.xi.size(); ++j) lp += ParamPrior::normal(1.0, prior.xi_sigma).log_density(m.xi(j));
  EXPECT_NEAR(m.log_post, lp, 1e-9 * (1.0 + std::abs(lp)));
  EXPECT_THROW(refine_map(chain, unit_prior(3), prob), InvalidInput);
}

TEST(Marginals, Summary) {
  PosteriorChain c;
  c.beta_dim = 1;
  c.samples = Eigen::VectorXd::LinSpaced(1001, 0.0, 1.0);
  c.log_post = Eigen::VectorXd::Zero(1001);
  const auto s = summarize_marginals(c);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].name, "beta_1");
  EXPECT_NEAR(s[0].mean, 0.5, 1e-12);
  EXPECT_NEAR(s[0].q025, 0.025, 1e-12);
  EXPECT_NEAR(s[0].q975, 0.975, 1e-12);
}

TEST(PosteriorPredictive, ZeroDeformationChain) {
  auto rs = landmark_records(10, 4);
  for (auto& r : rs) {
    r.pi0_flat.setZero();
    r.v0_flat.setZero();
    r.energy = 0.0;
  }
  const SurrogateModel model = fit_surrogate(rs);
  const CalibrationProblem prob(model, reference_shape(), spec(false, false, true));
  PosteriorChain c;
  c.beta_dim = 2;
  c.samples = Eigen::MatrixXd::Constant(20, 2, 0.5);
  c.log_post = Eigen::VectorXd::Zero(20);
  const PredictiveSummary s = posterior_predictive(c, prob, 10);
  EXPECT_LT((s.mean_dofs - dofs(reference_shape())).norm(), 1e-12);
  EXPECT_LT(s.std_dofs.norm(), 1e-12);
  EXPECT_EQ(s.used, 10);
  EXPECT_EQ(s.energies.size(), 10u);
  EXPECT_THROW(posterior_predictive(c, prob, 21), InvalidInput);
}

TEST(PosteriorPredictive, OppositeMomentaAverageOut) {
  const LandmarkShape q{PointSet::Zero(1, 2)};
  ShootingConfig cfg;
  cfg.kernel = kKernel;
  const Eigen::Vector2d pi(0.4, -0.2);
  const Trajectory a = integrate_geodesic(q, pi, cfg);
  const Trajectory b = integrate_geodesic(q, -pi, cfg);
  const PredictiveSummary s =
      summarize_shapes({with_dofs(q, a.states.back().q), with_dofs(q, b.states.back().q)});
  const Eigen::VectorXd disp = a.states.back().q;
  EXPECT_LT(s.mean_dofs.norm(), 1e-12);
  EXPECT_NEAR(s.std_dofs.norm(), disp.norm(), 1e-12);
}

TEST_F(CalibrationFixture, TooManyFailedDrawsIsAnError) {
  SurrogateModel broken = *model_;
  broken.momentum.components(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const CalibrationProblem prob(broken, reference_shape(), spec(false, false, true));
  PosteriorChain c;
  c.beta_dim = 2;
  c.samples = Eigen::MatrixXd::Constant(5, 2, 0.5);
  c.log_post = Eigen::VectorXd::Zero(5);
  EXPECT_THROW(posterior_predictive(c, prob, 5), NumericalFailure);
}

TEST(Rescale, UnitRange) {
  GridImage img{GridGeometry{2, 2, 0, 0, 1, 1}, GridField(2, 2)};
  img.values << 2, 4, 6, 10;
  const GridImage r = rescale_unit(img);
  EXPECT_EQ(r.values.minCoeff(), 0.0);
  EXPECT_EQ(r.values.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(r.values(0, 1), 0.25);
}

}  // namespace
}  // namespace diffcal
