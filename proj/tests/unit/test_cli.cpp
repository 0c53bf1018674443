#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "diffcal/error.hpp"
#include "diffcal/io.hpp"
#include "diffcal/prealign.hpp"
#include "diffcal/toy.hpp"
#include "diffcal_cli/cli.hpp"
#include "diffcal_cli/config.hpp"

namespace diffcal::cli {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("diffcal_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliRun {
  int code;
  std::string out;
  std::string log;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, log;
  const int code = run_cli(args, out, log);
  return {code, out.str(), log.str()};
}

const char* kLandmarkConfig = R"({
  "version": 1,
  "seed": 5,
  "kernel": {"lengthscale": 0.3},
  "optimizer": {"step_size": 0.02, "max_iters": 400},
  "priors": {"beta": [{"uniform": [0, 1]}, {"uniform": [0, 1]}]},
  "mcmc": {"chains": 4, "iterations": 5000, "burn_in": 500},
  "predict": {"draws": 20}
})";

// Six points on a circle, stretched by (1 + 0.3 b1, 1 + 0.3 b2) about the centre.
PointSet stretched(double b1, double b2) {
  PointSet p(6, 2);
  for (int k = 0; k < 6; ++k) {
    const double a = 2.0 * M_PI * k / 6.0;
    p(k, 0) = 0.5 + 0.2 * (1.0 + 0.3 * b1) * std::cos(a);
    p(k, 1) = 0.5 + 0.2 * (1.0 + 0.3 * b2) * std::sin(a);
  }
  return p;
}

void write_landmarks(const fs::path& path, const PointSet& p) {
  write_csv(path, CsvTable{{"x", "y"}, p});
}

// n stretched copies on a Latin hypercube over [0, 1]^2, plus the
// measurement at (0.5, 0.5).
void landmark_dataset(const fs::path& dir, int n) {
  fs::create_directories(dir / "sims");
  write_landmarks(dir / "mes.lmk", stretched(0.5, 0.5));
  const Eigen::MatrixXd design = latin_hypercube(n, Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1), 9);
  CsvTable betas{{"index", "beta_1", "beta_2"}, Eigen::MatrixXd(n, 3)};
  for (int i = 0; i < n; ++i) {
    betas.values.row(i) << i, design(i, 0), design(i, 1);
    char name[32];
    std::snprintf(name, sizeof name, "sim_%04d.lmk", i);
    write_landmarks(dir / "sims" / name, stretched(design(i, 0), design(i, 1)));
  }
  write_csv(dir / "sims" / "betas.csv", betas);
  write_text(dir / "cfg.json", kLandmarkConfig);
}

TEST(Config, DefaultsAndStrictParsing) {
  const RunConfig d = parse_config(R"({"version": 1})");
  EXPECT_EQ(d.shooting.num_steps, 10);
  EXPECT_EQ(d.shooting.scheme, Scheme::RK2);
  EXPECT_DOUBLE_EQ(d.shooting.kernel.lengthscale, 2.0 / 32.0);
  EXPECT_DOUBLE_EQ(d.shooting.match.weight, 100.0);
  EXPECT_DOUBLE_EQ(d.surrogate.holdout_fraction, 0.2);
  EXPECT_FALSE(d.match_kind.has_value());
  EXPECT_EQ(d.shooting_for(ShapeKind::Image).match.kind, MatchKind::L2Image);
  EXPECT_EQ(d.shooting_for(ShapeKind::Curve).match.kind, MatchKind::CurrentMMD);

  const RunConfig c = parse_config(kLandmarkConfig);
  EXPECT_EQ(c.seed, 5u);
  ASSERT_EQ(c.priors.beta.size(), 2u);
  EXPECT_EQ(c.mcmc.burn_in, 500);
  // The canonical dump parses back to the same dump.
  EXPECT_EQ(parse_config(c.dump()).dump(), c.dump());

  EXPECT_THROW(parse_config("{}"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 2})"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 1, "colour": 3})"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 1, "mcmc": {"chainz": 3}})"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 1, "mcmc": {"chains": "four"}})"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 1, "shooting": {"num_steps": 2}})"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 1, "shooting": {"scheme": "euler"}})"), InvalidInput);
  EXPECT_THROW(parse_config(R"({"version": 1, "priors": {"beta": [{"uniform": [1, 0]}]}})"), InvalidInput);
  EXPECT_THROW(parse_config("{version: 1"), InvalidInput);
}

TEST(Config, SeedEnvironmentOverride) {
  RunConfig c = parse_config(R"({"version": 1, "seed": 3})");
  ::setenv("DIFFCAL_SEED", "42", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 42u);
  ::setenv("DIFFCAL_SEED", "x1", 1);
  EXPECT_THROW(apply_seed_override(c), InvalidInput);
  ::unsetenv("DIFFCAL_SEED");
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 42u);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run({"register", "--mes", "a.grid"}).code, kUsage);
  EXPECT_EQ(run({"gen-toy", "--out", "x", "--beta", "1", "2"}).code, kUsage);
  EXPECT_EQ(run({"--help"}).code, kOk);
}

TEST(Cli, GenToyReferenceImageAndResume) {
  const fs::path dir = scratch_dir("gentoy");
  CliRun r = run({"gen-toy", "--out", dir.string(), "--beta", "0.2", "0.3", "0.4", "0.8"});
  ASSERT_EQ(r.code, kOk) << r.log;
  const GridImage img = read_grid_file(dir / "mes.grid");
  EXPECT_EQ(img.values, toy_image(toy_reference_beta()).values);

  const auto stamp = fs::last_write_time(dir / "mes.grid");
  r = run({"gen-toy", "--out", dir.string(), "--beta", "0.2", "0.3", "0.4", "0.8"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.log.find("up to date"), std::string::npos);
  EXPECT_EQ(fs::last_write_time(dir / "mes.grid"), stamp);

  r = run({"gen-toy", "--out", dir.string(), "--beta", "0.2", "0.3", "0.4", "0.8", "--force"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_EQ(r.log.find("up to date"), std::string::npos);
}

TEST(Cli, GenToyLatinHypercube) {
  const fs::path dir = scratch_dir("genlhs");
  CliRun r = run({"gen-toy", "--out", dir.string(), "--lhs", "12", "--seed", "4"});
  ASSERT_EQ(r.code, kOk) << r.log;
  const CsvTable betas = read_csv(dir / "betas.csv");
  ASSERT_EQ(betas.values.rows(), 12);
  const Eigen::Vector4d hi = toy_upper_bounds();
  for (Eigen::Index i = 0; i < 12; ++i) {
    EXPECT_EQ(betas.values(i, betas.column("index")), i);
    for (int j = 0; j < 4; ++j) {
      const double b = betas.values(i, betas.column("beta_" + std::to_string(j + 1)));
      EXPECT_GE(b, 0.0);
      EXPECT_LE(b, hi(j));
    }
  }
  const Eigen::MatrixXd design = latin_hypercube(12, toy_lower_bounds(), hi, 4);
  EXPECT_EQ(read_grid_file(dir / "sim_0007.grid").values,
            toy_image(design.row(7).transpose()).values);

  EXPECT_EQ(run({"gen-toy", "--out", dir.string(), "--lhs", "5", "--bounds", "0,0,0,0..0.5,0.5,0.7"}).code,
            kData);
  EXPECT_EQ(run({"gen-toy", "--out", dir.string(), "--lhs", "5", "--bounds", "0,0,0,1..0.5,0.5,0.7,0.7"}).code,
            kData);
}

TEST(Cli, RegisterLandmarksIsDeterministic) {
  const fs::path dir = scratch_dir("reglmk");
  landmark_dataset(dir, 6);
  // sim_0002 is replaced by an exact copy of the measurement.
  write_landmarks(dir / "sims" / "sim_0002.lmk", stretched(0.5, 0.5));
  const std::vector<std::string> args{"register", "--mes", (dir / "mes.lmk").string(), "--sims",
                                      (dir / "sims").string(), "--config", (dir / "cfg.json").string(),
                                      "--out", (dir / "reg").string()};
  CliRun r = run(args);
  ASSERT_EQ(r.code, kOk) << r.log;
  const CsvTable e = read_csv(dir / "reg" / "energies.csv");
  ASSERT_EQ(e.values.rows(), 6);
  EXPECT_LT(e.values(2, e.column("energy")), 1e-6);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_GE(e.values(i, e.column("energy")), 0.0);
  const std::string first = read_text(dir / "reg" / "energies.csv");

  r = run(args);
  EXPECT_NE(r.log.find("up to date"), std::string::npos);

  std::vector<std::string> forced = args;
  forced.push_back("--force");
  forced.push_back("--jobs");
  forced.push_back("3");
  r = run(forced);
  ASSERT_EQ(r.code, kOk) << r.log;
  EXPECT_EQ(read_text(dir / "reg" / "energies.csv"), first);
}

TEST(Cli, RegisterFailsFastOnUnreadableFile) {
  const fs::path dir = scratch_dir("regbad");
  landmark_dataset(dir, 4);
  write_text(dir / "sims" / "sim_0003.lmk", "x,y\n0.1,oops\n");
  CliRun r = run({"register", "--mes", (dir / "mes.lmk").string(), "--sims", (dir / "sims").string(),
               "--out", (dir / "reg").string()});
  EXPECT_EQ(r.code, kData);
  EXPECT_NE(r.log.find("sim_0003.lmk"), std::string::npos) << r.log;
  EXPECT_FALSE(fs::exists(dir / "reg" / "energies.csv"));

  fs::remove(dir / "sims" / "sim_0003.lmk");
  r = run({"register", "--mes", (dir / "mes.lmk").string(), "--sims", (dir / "sims").string(),
           "--out", (dir / "reg").string()});
  EXPECT_EQ(r.code, kData);
  EXPECT_NE(r.log.find("sim_0003"), std::string::npos);

  r = run({"register", "--mes", (dir / "missing.lmk").string(), "--sims", (dir / "sims").string(),
           "--out", (dir / "reg").string()});
  EXPECT_EQ(r.code, kData);
}

TEST(Cli, RegisterCurvesNormalizesJointly) {
  const fs::path dir = scratch_dir("regcurve");
  fs::create_directories(dir / "sims");
  auto curve = [](double amp, double shift) {
    std::string s = "t,y\n";
    for (int k = 0; k <= 20; ++k) {
      const double t = 10.0 * k / 20.0;
      s += std::to_string(t) + "," + std::to_string(100.0 + amp * std::sin(0.4 * t) + shift * t) + "\n";
    }
    return s;
  };
  write_text(dir / "mes.csv", curve(30.0, 1.0));
  write_text(dir / "sims" / "sim_0000.csv", curve(30.0, 1.0));
  write_text(dir / "sims" / "sim_0001.csv", curve(25.0, 2.0));
  write_text(dir / "sims" / "betas.csv", "index,beta_1\n0,1\n1,2\n");
  write_text(dir / "cfg.json", R"({"version": 1, "kernel": {"lengthscale": 0.3},
      "match": {"current_lengthscale": 0.2, "weight": 100}, "optimizer": {"step_size": 0.02}})");
  CliRun r = run({"register", "--mes", (dir / "mes.csv").string(), "--sims", (dir / "sims").string(),
               "--config", (dir / "cfg.json").string(), "--out", (dir / "reg").string()});
  ASSERT_EQ(r.code, kOk) << r.log;
  const std::string norm = read_text(dir / "reg" / "normalization.json");
  EXPECT_NE(norm.find("t_max"), std::string::npos);
  EXPECT_NE(read_text(dir / "reg" / "measurement.json").find("\"curve\""), std::string::npos);
  const CsvTable e = read_csv(dir / "reg" / "energies.csv");
  EXPECT_LT(e.values(0, e.column("energy")), 1e-6);
  EXPECT_GT(e.values(1, e.column("energy")), 1e-4);
}

TEST(Cli, PrealignStageRemovesRigidMotion) {
  const fs::path dir = scratch_dir("prealign");
  landmark_dataset(dir, 5);
  RigidParams g = RigidParams::zero(2);
  g.omega << 0.15, 0.05, -0.04;
  const Eigen::MatrixXd m = se_exp(g);
  const CsvTable betas = read_csv(dir / "sims" / "betas.csv");
  for (int i = 0; i < 5; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sim_%04d.lmk", i);
    const Shape moved = apply_rigid(LandmarkShape{stretched(0.5, 0.5)}, m);
    write_landmarks(dir / "sims" / name, std::get<LandmarkShape>(moved).points);
  }
  write_text(dir / "cfg_on.json", R"({"version": 1, "kernel": {"lengthscale": 0.3},
      "optimizer": {"step_size": 0.02}, "prealign": {"enabled": true}})");
  CliRun r = run({"register", "--mes", (dir / "mes.lmk").string(), "--sims", (dir / "sims").string(),
               "--config", (dir / "cfg_on.json").string(), "--out", (dir / "on").string()});
  ASSERT_EQ(r.code, kOk) << r.log;
  ASSERT_TRUE(fs::exists(dir / "on" / "prealign.json"));
  const CsvTable e = read_csv(dir / "on" / "energies.csv");
  EXPECT_LT(e.values.col(e.column("energy")).maxCoeff(), 1e-6);

  r = run({"register", "--mes", (dir / "mes.lmk").string(), "--sims", (dir / "sims").string(),
           "--config", (dir / "cfg.json").string(), "--out", (dir / "off").string()});
  ASSERT_EQ(r.code, kOk) << r.log;
  const CsvTable off = read_csv(dir / "off" / "energies.csv");
  EXPECT_GT(off.values.col(off.column("energy")).minCoeff(), 1e-3);
}

// Kolmogorov-Smirnov distance of samples against a uniform law on [a, b].
double ks_uniform(std::vector<double> x, double a, double b) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = (x[i] - a) / (b - a);
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  return d;
}

class LandmarkPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch_dir("pipeline");
    landmark_dataset(dir_, 40);
    const std::string cfg = (dir_ / "cfg.json").string();
    ASSERT_EQ(run({"register", "--mes", (dir_ / "mes.lmk").string(), "--sims", (dir_ / "sims").string(),
                   "--config", cfg, "--out", (dir_ / "reg").string(), "--jobs", "2"})
                  .code,
              kOk);
    ASSERT_EQ(run({"fit-surrogate", "--registrations", (dir_ / "reg").string(), "--config", cfg,
                   "--out", (dir_ / "sur").string()})
                  .code,
              kOk);
  }
  static fs::path dir_;
};
fs::path LandmarkPipeline::dir_;

TEST_F(LandmarkPipeline, FitSurrogateWritesModelAndValidation) {
  for (const char* f : {"surrogate.json", "validation.json", "measurement.json", "split.csv", "stage.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "sur" / f)) << f;
  }
  const CsvTable split = read_csv(dir_ / "sur" / "split.csv");
  EXPECT_EQ(split.values.rows(), 36);  // 40 less the 10% worst
  EXPECT_EQ(split.values.col(1).sum(), 7);
  const std::string v = read_text(dir_ / "sur" / "validation.json");
  EXPECT_NE(v.find("\"q2\""), std::string::npos);
  EXPECT_NE(v.find("\"iae\""), std::string::npos);
}

TEST_F(LandmarkPipeline, PriorOnlyChainMatchesPrior) {
  CliRun r = run({"calibrate", "--surrogate", (dir_ / "sur").string(), "--config",
               (dir_ / "cfg.json").string(), "--out", (dir_ / "prior").string(), "--prior-only"});
  ASSERT_EQ(r.code, kOk) << r.log;
  const CsvTable chain = read_csv(dir_ / "prior" / "chain.csv");
  EXPECT_EQ(chain.header, (std::vector<std::string>{"beta_1", "beta_2", "log_post"}));
  ASSERT_EQ(chain.values.rows(), 20000);
  for (int j = 0; j < 2; ++j) {
    std::vector<double> x(chain.values.col(j).data(), chain.values.col(j).data() + chain.values.rows());
    EXPECT_LT(ks_uniform(x, 0.0, 1.0), 0.05);
  }
  const std::string summary = read_text(dir_ / "prior" / "summary.csv");
  EXPECT_EQ(summary.rfind("name,mean,sd,q025,q975\nbeta_1,", 0), 0u);
}

TEST_F(LandmarkPipeline, CalibrateAndPredict) {
  const std::string cfg = (dir_ / "cfg.json").string();
  CliRun r = run({"calibrate", "--surrogate", (dir_ / "sur").string(), "--config", cfg, "--out",
               (dir_ / "post").string()});
  ASSERT_EQ(r.code, kOk) << r.log;
  r = run({"predict-posterior", "--surrogate", (dir_ / "sur").string(), "--chain",
           (dir_ / "post").string(), "--config", cfg, "--out", (dir_ / "pred").string(), "--jobs", "2"});
  ASSERT_EQ(r.code, kOk) << r.log;
  const CsvTable mean = read_csv(dir_ / "pred" / "mean.csv");
  EXPECT_EQ(mean.header, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(mean.values.rows(), 6);
  // The posterior predictive mean stays close to the measurement.
  EXPECT_LT((mean.values - stretched(0.5, 0.5)).norm(), 0.05);
  const CsvTable energies = read_csv(dir_ / "pred" / "energies.csv");
  EXPECT_EQ(energies.values.rows(), 20);

  const CsvTable chain = read_csv(dir_ / "post" / "chain.csv");
  for (int j = 0; j < 2; ++j) {
    const double m = chain.values.col(j).mean();
    EXPECT_NEAR(m, 0.5, 0.2);
  }
  r = run({"calibrate", "--surrogate", (dir_ / "sur").string(), "--config", cfg, "--out",
           (dir_ / "post").string()});
  EXPECT_NE(r.log.find("up to date"), std::string::npos);
}

TEST_F(LandmarkPipeline, RejectsModelVersionMismatch) {
  const fs::path bad = dir_ / "sur_bad";
  fs::remove_all(bad);
  fs::copy(dir_ / "sur", bad);
  std::string text = read_text(bad / "surrogate.json");
  const auto pos = text.find("\"version\"");
  ASSERT_NE(pos, std::string::npos);
  const auto colon = text.find(':', pos);
  const auto comma = text.find_first_of(",}", colon);
  text.replace(colon + 1, comma - colon - 1, " 99");
  write_text(bad / "surrogate.json", text);
  CliRun r = run({"calibrate", "--surrogate", bad.string(), "--config", (dir_ / "cfg.json").string(),
               "--out", (dir_ / "bad_out").string()});
  EXPECT_EQ(r.code, kData) << r.log;
}

}  // namespace
}  // namespace diffcal::cli
