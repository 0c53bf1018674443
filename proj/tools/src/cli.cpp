#include "diffcal_cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <ostream>

#include <CLI11.hpp>

#include "diffcal/error.hpp"
#include "diffcal/toy.hpp"

namespace diffcal::cli {

namespace fs = std::filesystem;

namespace {

Eigen::Vector4d parse_four(const std::string& text) {
  Eigen::Vector4d v;
  std::size_t pos = 0;
  for (int j = 0; j < 4; ++j) {
    const std::size_t end = j < 3 ? text.find(',', pos) : text.size();
    if (end == std::string::npos) throw InvalidInput("expected four comma-separated values: " + text);
    const std::string item = text.substr(pos, end - pos);
    char* stop = nullptr;
    v(j) = std::strtod(item.c_str(), &stop);
    if (item.empty() || *stop != '\0') throw InvalidInput("not a number: '" + item + "'");
    pos = end + 1;
  }
  return v;
}

// "lo1,lo2,lo3,lo4..hi1,hi2,hi3,hi4"
void parse_bounds(const std::string& text, Eigen::Vector4d& lo, Eigen::Vector4d& hi) {
  const std::size_t sep = text.find("..");
  if (sep == std::string::npos) throw InvalidInput("bounds must look like lo1,..,lo4..hi1,..,hi4");
  lo = parse_four(text.substr(0, sep));
  hi = parse_four(text.substr(sep + 2));
}

RunConfig config_from(const std::string& path) {
  RunConfig cfg = path.empty() ? default_config() : load_config(path);
  apply_seed_override(cfg);
  return cfg;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) {
  CLI::App app{"diffcal: shape registration, surrogate fitting and Bayesian calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "diffcal 0.3.0");

  StageOptions stage;
  std::string config_path;
  auto add_common = [&](CLI::App* sub, bool jobs) {
    sub->add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
    sub->add_flag("--force", stage.force, "recompute even when outputs are up to date");
    if (jobs) sub->add_option("--jobs", stage.jobs, "worker threads")->check(CLI::PositiveNumber);
  };

  GenToyOptions toy;
  std::vector<double> beta;
  std::string bounds;
  std::uint64_t seed = 0;
  std::string out_dir;
  auto* gen = app.add_subcommand("gen-toy", "write toy images and their parameters");
  gen->add_option("--out", out_dir, "output directory")->required();
  auto* beta_opt = gen->add_option("--beta", beta, "one image at b1 b2 b3 b4")->expected(4);
  auto* lhs_opt = gen->add_option("--lhs", toy.lhs, "Latin hypercube of n images")->check(CLI::PositiveNumber);
  gen->add_option("--bounds", bounds, "design box lo1,lo2,lo3,lo4..hi1,hi2,hi3,hi4");
  auto* seed_opt = gen->add_option("--seed", seed, "design seed");
  gen->add_option("--size", toy.size, "image side in pixels");
  gen->add_flag("--force", stage.force, "recompute even when outputs are up to date");
  beta_opt->excludes(lhs_opt);
  gen->require_option(1, 3);

  std::string mes, sims, registrations, surrogate, chain;
  auto* reg = app.add_subcommand("register", "register the measurement to every simulation");
  reg->add_option("--mes", mes, "measurement shape file")->required();
  reg->add_option("--sims", sims, "simulation directory with betas.csv")->required();
  reg->add_option("--out", out_dir, "output directory")->required();
  add_common(reg, true);

  auto* fit = app.add_subcommand("fit-surrogate", "fit the PCA + GP velocity surrogate");
  fit->add_option("--registrations", registrations, "register output directory")->required();
  fit->add_option("--out", out_dir, "output directory")->required();
  add_common(fit, false);

  bool prior_only = false;
  auto* cal = app.add_subcommand("calibrate", "sample the posterior of the parameters");
  cal->add_option("--surrogate", surrogate, "fit-surrogate output directory")->required();
  cal->add_option("--out", out_dir, "output directory")->required();
  cal->add_flag("--prior-only", prior_only, "drop the likelihood and sample the prior");
  add_common(cal, false);

  auto* pred = app.add_subcommand("predict-posterior", "posterior predictive mean and spread");
  pred->add_option("--surrogate", surrogate, "fit-surrogate output directory")->required();
  pred->add_option("--chain", chain, "calibrate output directory")->required();
  pred->add_option("--out", out_dir, "output directory")->required();
  add_common(pred, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, log);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) {
      if (beta_opt->count() == 0 && lhs_opt->count() == 0) {
        log << "gen-toy: give one of --beta and --lhs\n";
        return kUsage;
      }
      toy.out = out_dir;
      if (!beta.empty()) toy.beta = Eigen::Vector4d(beta[0], beta[1], beta[2], beta[3]);
      toy.lower = toy_lower_bounds();
      toy.upper = toy_upper_bounds();
      if (!bounds.empty()) parse_bounds(bounds, toy.lower, toy.upper);
      if (seed_opt->count() > 0) {
        toy.seed = seed;
      } else {
        RunConfig env = default_config();
        apply_seed_override(env);
        toy.seed = env.seed;
      }
      gen_toy(toy, stage, log);
    } else if (reg->parsed()) {
      register_stage(mes, sims, config_from(config_path), out_dir, stage, log);
    } else if (fit->parsed()) {
      fit_surrogate_stage(registrations, config_from(config_path), out_dir, stage, log);
    } else if (cal->parsed()) {
      calibrate_stage(surrogate, config_from(config_path), out_dir, prior_only, stage, log);
    } else if (pred->parsed()) {
      predict_stage(surrogate, chain, config_from(config_path), out_dir, stage, log);
    }
  } catch (const InvalidInput& e) {
    log << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return kData;
  } catch (const NumericalFailure& e) {
    log << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}

}  // namespace diffcal::cli
