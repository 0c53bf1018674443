#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "artifacts.hpp"
#include "diffcal/calibration.hpp"
#include "diffcal/error.hpp"
#include "diffcal/io.hpp"
#include "diffcal/metrics.hpp"
#include "diffcal/prealign.hpp"
#include "diffcal/shooting.hpp"
#include "diffcal/surrogate.hpp"
#include "diffcal/toy.hpp"
#include "diffcal_cli/cli.hpp"

namespace diffcal::cli {

namespace fs = std::filesystem;

namespace {

std::string sim_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sim_%04d", index);
  return buf;
}

std::string number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// The named top-level sections of the canonical config, as a config document
// of its own.
json config_subset(const RunConfig& cfg, std::initializer_list<const char*> keys) {
  const json full = json::parse(cfg.dump());
  json out = {{"version", full["version"]}};
  for (const char* k : keys) out[k] = full[k];
  return out;
}

// ---- shape files ------------------------------------------------------------

struct RawShape {
  ShapeKind kind;
  GridImage image;
  PointSet points;
  Eigen::VectorXd t, y;  // curves, before normalization
};

RawShape read_raw_shape(const fs::path& path) {
  const std::string ext = path.extension().string();
  RawShape r{};
  try {
    if (ext == ".grid") {
      r.kind = ShapeKind::Image;
      r.image = read_grid_file(path);
    } else if (ext == ".csv") {
      r.kind = ShapeKind::Curve;
      read_curve_csv(path, r.t, r.y);
    } else if (ext == ".lmk") {
      r.kind = ShapeKind::Landmarks;
      const CsvTable table = read_csv(path);
      r.points = table.values;
    } else {
      throw InvalidInput("unrecognized shape file extension '" + ext + "'");
    }
  } catch (const InvalidInput& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw InvalidInput(path.string() + ": " + what);
  }
  return r;
}

struct CurveBounds {
  double t_min = 0, t_max = 1, y_min = 0, y_max = 1;
};

CurveBounds shared_bounds(const std::vector<const RawShape*>& shapes) {
  CurveBounds b{INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (const RawShape* s : shapes) {
    b.t_min = std::min(b.t_min, s->t.minCoeff());
    b.t_max = std::max(b.t_max, s->t.maxCoeff());
    b.y_min = std::min(b.y_min, s->y.minCoeff());
    b.y_max = std::max(b.y_max, s->y.maxCoeff());
  }
  if (!(b.t_max > b.t_min) || !(b.y_max > b.y_min)) {
    throw InvalidInput("curves span a degenerate range; cannot normalize");
  }
  return b;
}

Shape to_shape(const RawShape& r, const CurveBounds& b) {
  Shape s;
  switch (r.kind) {
    case ShapeKind::Image: s = r.image; break;
    case ShapeKind::Landmarks: s = LandmarkShape{r.points}; break;
    case ShapeKind::Curve: s = curve_from_graph(r.t, r.y, b.t_min, b.t_max, b.y_min, b.y_max); break;
  }
  validate(s);
  return s;
}

fs::path find_sim_file(const fs::path& dir, int index) {
  const std::string stem = sim_stem(index);
  std::vector<fs::path> found;
  for (const char* ext : {".grid", ".csv", ".lmk"}) {
    const fs::path p = dir / (stem + ext);
    if (fs::exists(p)) found.push_back(p);
  }
  if (found.empty()) throw InvalidInput((dir / stem).string() + ".*: simulation file not found");
  if (found.size() > 1) throw InvalidInput((dir / stem).string() + ".*: ambiguous simulation file");
  return found.front();
}

struct Design {
  std::vector<int> index;
  Eigen::MatrixXd beta;
};

Design read_design(const fs::path& path) {
  const CsvTable table = read_csv(path);
  Design d;
  const Eigen::Index ic = table.column("index");
  std::vector<Eigen::Index> cols;
  for (int j = 1;; ++j) {
    const std::string name = "beta_" + std::to_string(j);
    if (std::find(table.header.begin(), table.header.end(), name) == table.header.end()) break;
    cols.push_back(table.column(name));
  }
  if (cols.empty()) throw InvalidInput(path.string() + ": no beta_1.. columns");
  d.beta.resize(table.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    const double idx = table.values(i, ic);
    if (idx < 0 || idx != std::floor(idx) || idx > 1e7) {
      throw InvalidInput(path.string() + ": bad index on row " + std::to_string(i + 1));
    }
    d.index.push_back(static_cast<int>(idx));
    for (std::size_t j = 0; j < cols.size(); ++j) d.beta(i, j) = table.values(i, cols[j]);
  }
  std::vector<int> sorted = d.index;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidInput(path.string() + ": duplicate index");
  }
  return d;
}

CsvTable design_table(const std::vector<int>& index, const Eigen::MatrixXd& beta,
                      const std::vector<std::pair<std::string, Eigen::VectorXd>>& extra) {
  CsvTable t;
  t.header.push_back("index");
  for (const auto& [name, col] : extra) t.header.push_back(name);
  for (Eigen::Index j = 0; j < beta.cols(); ++j) t.header.push_back("beta_" + std::to_string(j + 1));
  t.values.resize(beta.rows(), static_cast<Eigen::Index>(t.header.size()));
  for (Eigen::Index i = 0; i < beta.rows(); ++i) {
    t.values(i, 0) = index[i];
    for (std::size_t k = 0; k < extra.size(); ++k) t.values(i, 1 + k) = extra[k].second(i);
    t.values.row(i).tail(beta.cols()) = beta.row(i);
  }
  return t;
}

bool skip_stage(const fs::path& out, const std::string& stage, const std::string& key,
                const StageOptions& opt, std::ostream& log) {
  if (!opt.force && stage_up_to_date(out, stage, key)) {
    log << stage << ": outputs in " << out.string() << " are up to date\n";
    return true;
  }
  return false;
}

// ---- surrogate directory --------------------------------------------------

struct SurrogateBundle {
  SurrogateModel model;
  Shape measurement;
  RunConfig registration;
  std::string text;  // everything the bundle consists of, for fingerprints
};

SurrogateBundle load_bundle(const fs::path& dir) {
  SurrogateBundle b;
  const std::string model_text = read_text(dir / "surrogate.json");
  const std::string mes_text = read_text(dir / "measurement.json");
  const std::string reg_text = read_text(dir / "registration_config.json");
  try {
    b.model = deserialize_surrogate(model_text);
    b.measurement = shape_from_json(json::parse(mes_text));
  } catch (const json::exception& e) {
    throw InvalidInput(dir.string() + ": " + e.what());
  }
  b.registration = parse_config(reg_text);
  b.text = model_text + mes_text + reg_text;
  return b;
}

LikelihoodSpec likelihood_for(const RunConfig& cfg, const SurrogateBundle& b) {
  LikelihoodSpec spec = cfg.likelihood;
  spec.shooting = b.registration.shooting_for(kind_of(b.measurement));
  return spec;
}

void write_point_table(const fs::path& path, const PointSet& p) {
  CsvTable t;
  const char* axes[] = {"x", "y", "z"};
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    t.header.push_back(j < 3 ? axes[j] : "c" + std::to_string(j));
  }
  t.values = p;
  write_csv(path, t);
}

}  // namespace

// ---- gen-toy ----------------------------------------------------------------

bool gen_toy(const GenToyOptions& opt, const StageOptions& stage, std::ostream& log) {
  if (opt.size < 4) throw InvalidInput("--size must be at least 4");
  const bool single = opt.beta.has_value();
  if (single == (opt.lhs > 0)) throw InvalidInput("give exactly one of --beta and --lhs");
  if (!single) {
    for (int j = 0; j < 4; ++j) {
      if (!std::isfinite(opt.lower(j)) || !std::isfinite(opt.upper(j)) || !(opt.lower(j) < opt.upper(j))) {
        throw InvalidInput("bounds must be finite with lo < hi in every component");
      }
    }
  }
  std::uint64_t seed = opt.seed.value_or(0);
  std::ostringstream k;
  k << "gen-toy " << opt.size << ' ';
  if (single) {
    for (int j = 0; j < 4; ++j) k << encode_double((*opt.beta)(j)) << ' ';
  } else {
    k << opt.lhs << ' ' << seed << ' ';
    for (int j = 0; j < 4; ++j) k << encode_double(opt.lower(j)) << ' ' << encode_double(opt.upper(j)) << ' ';
  }
  const std::string key = fingerprint(k.str());
  if (skip_stage(opt.out, "gen-toy", key, stage, log)) return false;
  fs::create_directories(opt.out);

  std::vector<std::string> outputs;
  if (single) {
    write_grid_file(opt.out / "mes.grid", toy_image(*opt.beta, opt.size));
    write_csv(opt.out / "mes_beta.csv",
              design_table({0}, opt.beta->transpose(), {}));
    outputs = {"mes.grid", "mes_beta.csv"};
  } else {
    const Eigen::MatrixXd design = latin_hypercube(opt.lhs, opt.lower, opt.upper, seed);
    std::vector<int> index(opt.lhs);
    std::iota(index.begin(), index.end(), 0);
    for (int i = 0; i < opt.lhs; ++i) {
      const std::string name = sim_stem(i) + ".grid";
      write_grid_file(opt.out / name, toy_image(design.row(i).transpose(), opt.size));
      outputs.push_back(name);
    }
    write_csv(opt.out / "betas.csv", design_table(index, design, {}));
    outputs.push_back("betas.csv");
    log << "gen-toy: wrote " << opt.lhs << " images\n";
  }
  write_manifest(opt.out, "gen-toy", key, outputs);
  return true;
}

// ---- register ---------------------------------------------------------------

bool register_stage(const fs::path& mes, const fs::path& sims, const RunConfig& cfg,
                    const fs::path& out, const StageOptions& stage, std::ostream& log) {
  const Design design = read_design(sims / "betas.csv");
  const int n = static_cast<int>(design.index.size());
  if (n == 0) throw InvalidInput((sims / "betas.csv").string() + ": no simulations listed");

  // Read everything up front so an unreadable file stops the stage early.
  const RawShape raw_mes = read_raw_shape(mes);
  std::vector<RawShape> raw(n);
  std::string contents = read_text(mes) + read_text(sims / "betas.csv");
  for (int i = 0; i < n; ++i) {
    const fs::path p = find_sim_file(sims, design.index[i]);
    raw[i] = read_raw_shape(p);
    if (raw[i].kind != raw_mes.kind) {
      throw InvalidInput(p.string() + ": representation differs from the measurement");
    }
    contents += p.filename().string() + read_text(p);
  }
  CurveBounds bounds;
  if (raw_mes.kind == ShapeKind::Curve) {
    std::vector<const RawShape*> all{&raw_mes};
    for (const auto& r : raw) all.push_back(&r);
    bounds = shared_bounds(all);
  }
  const Shape q_mes = to_shape(raw_mes, bounds);
  std::vector<Shape> targets;
  targets.reserve(n);
  for (int i = 0; i < n; ++i) {
    try {
      targets.push_back(to_shape(raw[i], bounds));
    } catch (const InvalidInput& e) {
      throw InvalidInput(find_sim_file(sims, design.index[i]).string() + ": " + e.what());
    }
  }
  const ShapeKind kind = kind_of(q_mes);

  const json reg_cfg = config_subset(cfg, {"kernel", "shooting", "optimizer", "match", "prealign"});
  const std::string key = fingerprint("register " + reg_cfg.dump() + contents);
  if (skip_stage(out, "register", key, stage, log)) return false;
  fs::create_directories(out / "solutions");

  const ShootingConfig scfg = cfg.shooting_for(kind);
  scfg.validate();
  std::vector<std::string> outputs{"measurement.json", "registration_config.json", "energies.csv"};

  if (cfg.prealign.enabled) {
    const RigidFit fit = fit_mean_rigid(q_mes, targets, scfg.match, cfg.prealign.fit);
    const Eigen::MatrixXd g = se_exp(fit.params);
    for (auto& t : targets) t = apply_rigid(t, g);
    json pj = {{"omega", vector_json(fit.params.omega)},
               {"objective", encode_double(fit.objective)},
               {"iterations", fit.iterations},
               {"converged", fit.converged}};
    write_json(out / "prealign.json", pj);
    outputs.push_back("prealign.json");
    log << "register: pre-alignment objective " << fit.objective << " after " << fit.iterations
        << " iterations\n";
  }
  write_json(out / "measurement.json", shape_json(q_mes));
  write_json(out / "registration_config.json", reg_cfg);
  if (kind == ShapeKind::Curve) {
    write_json(out / "normalization.json", {{"t_min", bounds.t_min}, {"t_max", bounds.t_max},
                                            {"y_min", bounds.y_min}, {"y_max", bounds.y_max}});
    outputs.push_back("normalization.json");
  }

  Eigen::VectorXd energy(n), residual(n), converged(n), iterations(n);
  std::vector<std::string> failures(n);
  std::mutex mu;
  int done = 0;
  parallel_for(n, stage.jobs, [&](int i) {
    const std::string name = sim_stem(design.index[i]) + ".json";
    const fs::path path = out / "solutions" / name;
    json j;
    bool reuse = false;
    if (!stage.force && fs::exists(path)) {
      try {
        j = json::parse(read_text(path));
        reuse = j.at("key").get<std::string>() == key;
      } catch (const std::exception&) {
        reuse = false;
      }
    }
    if (!reuse) {
      GeodesicSolution sol;
      try {
        sol = register_shapes(q_mes, targets[i], scfg);
      } catch (const NumericalFailure& e) {
        std::lock_guard<std::mutex> lock(mu);
        failures[i] = e.what();
        return;
      }
      j = {{"key", key},
           {"index", design.index[i]},
           {"beta", vector_json(design.beta.row(i).transpose())},
           {"energy", encode_double(deformation_energy(sol))},
           {"hamiltonian", encode_double(sol.hamiltonian)},
           {"match_residual", encode_double(sol.match_residual)},
           {"loss", encode_double(sol.loss)},
           {"converged", sol.converged},
           {"iterations", sol.iterations},
           {"pi0", vector_json(sol.pi0)},
           {"v0", vector_json(initial_velocity(q_mes, sol.pi0, scfg.kernel))}};
      write_json(path, j);
    }
    energy(i) = decode_double(j.at("energy").get<std::string>());
    residual(i) = decode_double(j.at("match_residual").get<std::string>());
    converged(i) = j.at("converged").get<bool>() ? 1.0 : 0.0;
    iterations(i) = j.at("iterations").get<int>();
    std::lock_guard<std::mutex> lock(mu);
    ++done;
    log << "register: " << name << (reuse ? " (cached)" : "") << " E=" << energy(i) << " [" << done
        << "/" << n << "]\n";
  });

  std::string failed;
  for (int i = 0; i < n; ++i) {
    if (!failures[i].empty()) failed += "\n  " + sim_stem(design.index[i]) + ": " + failures[i];
  }
  if (!failed.empty()) throw NumericalFailure("registration failed for" + failed);

  write_csv(out / "energies.csv",
            design_table(design.index, design.beta,
                         {{"energy", energy}, {"match_residual", residual},
                          {"converged", converged}, {"iterations", iterations}}));
  for (int i = 0; i < n; ++i) outputs.push_back("solutions/" + sim_stem(design.index[i]) + ".json");
  write_manifest(out, "register", key, outputs);
  log << "register: energies range [" << energy.minCoeff() << ", " << energy.maxCoeff() << "]\n";
  return true;
}

// ---- fit-surrogate ----------------------------------------------------------

bool fit_surrogate_stage(const fs::path& registrations, const RunConfig& cfg, const fs::path& out,
                         const StageOptions& stage, std::ostream& log) {
  const std::string manifest = read_text(registrations / "stage.json");
  const json sur_cfg = config_subset(cfg, {"surrogate"});
  const std::string key =
      fingerprint("fit-surrogate " + std::to_string(cfg.seed) + sur_cfg.dump() + manifest);
  if (skip_stage(out, "fit-surrogate", key, stage, log)) return false;

  const CsvTable table = read_csv(registrations / "energies.csv");
  const Eigen::Index ic = table.column("index");
  std::vector<VelocityRecord> records;
  std::vector<int> record_index;
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    const int idx = static_cast<int>(table.values(r, ic));
    const fs::path p = registrations / "solutions" / (sim_stem(idx) + ".json");
    const json j = read_json(p);
    try {
      VelocityRecord rec;
      rec.beta = vector_from_json(j.at("beta"), p.string());
      rec.v0_flat = vector_from_json(j.at("v0"), p.string());
      rec.pi0_flat = vector_from_json(j.at("pi0"), p.string());
      rec.energy = decode_double(j.at("energy").get<std::string>());
      records.push_back(std::move(rec));
      record_index.push_back(idx);
    } catch (const json::exception& e) {
      throw InvalidInput(p.string() + ": " + e.what());
    }
  }
  std::vector<VelocityRecord> kept = filter_worst(records, cfg.surrogate.filter_fraction);
  // Survivors keep their order, so they can be matched back in one pass.
  std::vector<int> kept_index;
  for (std::size_t i = 0, k = 0; k < kept.size(); ++i) {
    if (records[i].energy == kept[k].energy && records[i].beta == kept[k].beta) {
      kept_index.push_back(record_index[i]);
      ++k;
    }
  }

  const int n = static_cast<int>(kept.size());
  const int n_hold = static_cast<int>(std::lround(cfg.surrogate.holdout_fraction * n));
  if (n_hold < 5 || n - n_hold < 3) {
    throw InvalidInput("too few registrations for a training / held-out split (" + std::to_string(n) +
                       " after filtering)");
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<char> held(n, 0);
  for (int k = 0; k < n_hold; ++k) held[perm[k]] = 1;
  std::vector<VelocityRecord> train, test;
  for (int i = 0; i < n; ++i) (held[i] ? test : train).push_back(kept[i]);

  SurrogateConfig scfg;
  scfg.variance_fraction = cfg.surrogate.variance_fraction;
  scfg.gp = GpFitConfig{cfg.surrogate.gp_restarts, cfg.seed, cfg.surrogate.gp_max_iters};
  scfg.jobs = 1;
  log << "fit-surrogate: training on " << train.size() << " records, holding out " << test.size()
      << "\n";
  const SurrogateModel model = fit_surrogate(train, scfg);
  const ValidationReport report = validation_report(model, test);

  fs::create_directories(out);
  write_text(out / "surrogate.json", serialize_surrogate(model));
  write_text(out / "measurement.json", read_text(registrations / "measurement.json"));
  write_text(out / "registration_config.json", read_text(registrations / "registration_config.json"));
  json v = {{"nrmse", report.nrmse}, {"nmae", report.nmae}, {"q2", report.q2},
            {"crps", report.crps},   {"iae", report.iae},   {"rrmse_percent", report.rrmse},
            {"dimensions", report.dimensions},
            {"held_out", report.samples},
            {"training", model.training_size},
            {"filtered_out", static_cast<int>(records.size()) - n},
            {"latent_dim", model.latent_dim()},
            {"explained_variance_fraction", model.basis.variance_fraction}};
  write_json(out / "validation.json", v);
  Eigen::VectorXd idx(n), flag(n);
  for (int i = 0; i < n; ++i) {
    idx(i) = kept_index[i];
    flag(i) = held[i];
  }
  CsvTable split;
  split.header = {"index", "held_out"};
  split.values.resize(n, 2);
  split.values << idx, flag;
  write_csv(out / "split.csv", split);
  write_manifest(out, "fit-surrogate", key,
                 {"surrogate.json", "measurement.json", "registration_config.json", "validation.json",
                  "split.csv"});
  log << "fit-surrogate: P=" << model.latent_dim() << " Q2=" << report.q2 << " IAE=" << report.iae
      << "\n";
  return true;
}

// ---- calibrate --------------------------------------------------------------

bool calibrate_stage(const fs::path& surrogate, const RunConfig& cfg, const fs::path& out,
                     bool prior_only, const StageOptions& stage, std::ostream& log) {
  const SurrogateBundle b = load_bundle(surrogate);
  const json cal_cfg = config_subset(cfg, {"likelihood", "priors", "mcmc"});
  const std::string key = fingerprint("calibrate " + std::to_string(cfg.seed) + (prior_only ? "P" : "L") +
                                      cal_cfg.dump() + b.text);
  if (skip_stage(out, "calibrate", key, stage, log)) return false;

  if (static_cast<int>(cfg.priors.beta.size()) != b.model.input_dim()) {
    throw InvalidInput("priors.beta lists " + std::to_string(cfg.priors.beta.size()) +
                       " priors; the surrogate has " + std::to_string(b.model.input_dim()) +
                       " parameters");
  }
  const CalibrationProblem problem(b.model, b.measurement, likelihood_for(cfg, b));
  McmcConfig mcmc = cfg.mcmc;
  mcmc.seed = cfg.seed;
  mcmc.jobs = 1;
  log << "calibrate: " << mcmc.chains << " chains x " << mcmc.iterations << " iterations"
      << (prior_only ? " (prior only)" : "") << "\n";
  const PosteriorChain chain = sample_posterior(cfg.priors, problem, mcmc, !prior_only);

  fs::create_directories(out);
  CsvTable t;
  t.header = chain.column_names();
  t.header.push_back("log_post");
  t.values.resize(chain.samples.rows(), chain.samples.cols() + 1);
  t.values << chain.samples, chain.log_post;
  write_csv(out / "chain.csv", t);

  const auto marginals = summarize_marginals(chain);
  std::string csv = "name,mean,sd,q025,q975\n";
  json mj = json::array();
  for (const auto& m : marginals) {
    csv += m.name + "," + number(m.mean) + "," + number(m.sd) + "," + number(m.q025) + "," +
           number(m.q975) + "\n";
    mj.push_back({{"name", m.name}, {"mean", m.mean}, {"sd", m.sd}, {"q025", m.q025}, {"q975", m.q975}});
  }
  write_text(out / "summary.csv", csv);

  const MapEstimate map = prior_only ? map_estimate(chain) : refine_map(chain, cfg.priors, problem);
  json rhat = json::array();
  for (Eigen::Index j = 0; j < chain.rhat.size(); ++j) rhat.push_back(chain.rhat(j));
  json sj = {{"seed", chain.seed},     {"chains", chain.chains},
             {"burn_in", chain.burn_in}, {"thin", chain.thin},
             {"prior_only", prior_only}, {"acceptance_rate", chain.acceptance_rate},
             {"rhat", rhat},            {"marginals", mj},
             {"map", {{"beta", std::vector<double>(map.beta.data(), map.beta.data() + map.beta.size())},
                      {"xi", std::vector<double>(map.xi.data(), map.xi.data() + map.xi.size())},
                      {"log_post", map.log_post}}}};
  write_json(out / "summary.json", sj);
  write_manifest(out, "calibrate", key, {"chain.csv", "summary.csv", "summary.json"});
  for (const auto& m : marginals) {
    log << "calibrate: " << m.name << " mean " << m.mean << " sd " << m.sd << " 95% [" << m.q025
        << ", " << m.q975 << "]\n";
  }
  return true;
}

// ---- predict-posterior ------------------------------------------------------

bool predict_stage(const fs::path& surrogate, const fs::path& chain_dir, const RunConfig& cfg,
                   const fs::path& out, const StageOptions& stage, std::ostream& log) {
  const SurrogateBundle b = load_bundle(surrogate);
  const std::string chain_text = read_text(chain_dir / "chain.csv");
  const json pred_cfg = config_subset(cfg, {"likelihood", "predict"});
  const std::string key = fingerprint("predict-posterior " + pred_cfg.dump() + b.text + chain_text);
  if (skip_stage(out, "predict-posterior", key, stage, log)) return false;

  const CsvTable t = read_csv(chain_dir / "chain.csv");
  PosteriorChain chain;
  int p = 0, xi = 0;
  for (const auto& h : t.header) {
    if (h.rfind("beta_", 0) == 0) ++p;
    if (h.rfind("xi_", 0) == 0) ++xi;
  }
  const Eigen::Index lp = t.column("log_post");
  if (p + xi + 1 != static_cast<int>(t.header.size()) || lp != p + xi || t.values.rows() == 0) {
    throw InvalidInput((chain_dir / "chain.csv").string() + ": unexpected chain columns");
  }
  chain.beta_dim = p;
  chain.samples = t.values.leftCols(p + xi);
  chain.log_post = t.values.col(lp);

  LikelihoodSpec spec = likelihood_for(cfg, b);
  spec.include_discrepancy = xi > 0;
  const CalibrationProblem problem(b.model, b.measurement, spec);
  const int draws = std::min<int>(cfg.predict_draws, static_cast<int>(chain.samples.rows()));
  log << "predict-posterior: pushing forward " << draws << " draws\n";
  const PredictiveSummary s = posterior_predictive(chain, problem, draws, stage.jobs);

  fs::create_directories(out);
  std::vector<std::string> outputs{"energies.csv", "predictive.json"};
  if (const auto* mean = std::get_if<GridImage>(&s.mean)) {
    const auto& std_img = std::get<GridImage>(s.std);
    const double range = mean->values.maxCoeff() - mean->values.minCoeff();
    GridImage std_unit = std_img;
    if (range > 0.0) std_unit.values /= range;
    write_grid_file(out / "mean.grid", rescale_unit(*mean));
    write_grid_file(out / "std.grid", std_unit);
    write_grid_file(out / "mean_raw.grid", *mean);
    write_grid_file(out / "std_raw.grid", std_img);
    outputs.insert(outputs.end(), {"mean.grid", "std.grid", "mean_raw.grid", "std_raw.grid"});
  } else {
    write_point_table(out / "mean.csv", points_of(s.mean));
    write_point_table(out / "std.csv", points_of(s.std));
    outputs.insert(outputs.end(), {"mean.csv", "std.csv"});
  }
  CsvTable e;
  e.header = {"draw", "energy"};
  e.values.resize(static_cast<Eigen::Index>(s.energies.size()), 2);
  for (std::size_t k = 0; k < s.energies.size(); ++k) {
    e.values(k, 0) = static_cast<double>(k);
    e.values(k, 1) = s.energies[k];
  }
  write_csv(out / "energies.csv", e);
  write_json(out / "predictive.json", {{"used", s.used},
                                       {"skipped", s.skipped},
                                       {"mean_std", s.std_dofs.mean()},
                                       {"kind", kind_name(kind_of(s.mean))}});
  write_manifest(out, "predict-posterior", key, outputs);
  log << "predict-posterior: used " << s.used << " draws, mean pointwise std " << s.std_dofs.mean()
      << "\n";
  return true;
}

}  // namespace diffcal::cli
