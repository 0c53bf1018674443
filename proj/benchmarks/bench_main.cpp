#include <benchmark/benchmark.h>

#include <random>

#include "diffcal/gp.hpp"
#include "diffcal/kernels.hpp"
#include "diffcal/shooting.hpp"
#include "diffcal/toy.hpp"

using namespace diffcal;

static void BM_GridConvolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridGeometry g{n, n, 0.0, 0.0, 1.0, 1.0};
  const GridConvolver conv(g, KernelSpec{KernelFamily::Gaussian, 2.0 / 32.0, 1.0});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss;
  GridVectorField m{GridField(n, n), GridField(n, n)};
  for (Eigen::Index i = 0; i < m.x.size(); ++i) {
    m.x.data()[i] = gauss(rng);
    m.y.data()[i] = gauss(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(conv.apply(m));
}
BENCHMARK(BM_GridConvolve)->Arg(16)->Arg(32)->Arg(64);

static void BM_LandmarkLossGrad(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointSet src(n, 2), tgt(n, 2);
  for (int i = 0; i < n; ++i) {
    src.row(i) << u(rng), u(rng);
    tgt.row(i) = src.row(i) + Eigen::RowVector2d(0.05 * u(rng), 0.05 * u(rng));
  }
  ShootingConfig cfg;
  cfg.num_steps = 20;
  cfg.kernel = KernelSpec{KernelFamily::Gaussian, 0.3, 1.0};
  cfg.match.weight = 100.0;
  const Eigen::VectorXd pi0 = Eigen::VectorXd::Constant(2 * n, 0.01);
  for (auto _ : state) {
    benchmark::DoNotOptimize(shooting_loss(LandmarkShape{src}, pi0, LandmarkShape{tgt}, cfg));
  }
}
BENCHMARK(BM_LandmarkLossGrad)->Arg(10)->Arg(50)->Unit(benchmark::kMicrosecond);

static void BM_ImageLossGrad(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const GridImage src = toy_image(toy_reference_beta(), n);
  const GridImage tgt = toy_image(Eigen::Vector4d(0.1, 0.2, 0.3, 0.4), n);
  ShootingConfig cfg;
  cfg.num_steps = 10;
  cfg.scheme = state.range(1) ? Scheme::RK2 : Scheme::Leapfrog;
  cfg.kernel = KernelSpec{KernelFamily::Gaussian, 2.0 / 32.0, 1.0};
  cfg.match = MatchSpec{MatchKind::L2Image, {}, 100.0};
  const Eigen::VectorXd pi0 = 0.01 * (dofs(tgt) - dofs(src));
  for (auto _ : state) benchmark::DoNotOptimize(shooting_loss(src, pi0, tgt, cfg));
}
BENCHMARK(BM_ImageLossGrad)->Args({32, 1})->Args({32, 0})->Unit(benchmark::kMillisecond);

static void BM_GpFit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Eigen::MatrixXd x = latin_hypercube(n, toy_lower_bounds(), toy_upper_bounds(), 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = std::sin(6.0 * x(i, 0)) + x(i, 1) * x(i, 2) - x(i, 3);
  GpFitConfig cfg;
  cfg.restarts = 1;
  for (auto _ : state) benchmark::DoNotOptimize(GpModel::fit(x, y, cfg));
}
BENCHMARK(BM_GpFit)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
