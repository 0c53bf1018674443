#include "diffcal_cli/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "diffcal/error.hpp"
#include "diffcal/io.hpp"

namespace diffcal::cli {

using nlohmann::json;

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw InvalidInput(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw InvalidInput("unknown config key '" + where + "." + it.key() + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput("config key '" + where + "." + key + "' has the wrong type");
  }
}

const char* scheme_name(Scheme s) { return s == Scheme::RK2 ? "rk2" : "leapfrog"; }

Scheme parse_scheme(const std::string& s) {
  if (s == "rk2") return Scheme::RK2;
  if (s == "leapfrog") return Scheme::Leapfrog;
  throw InvalidInput("unknown scheme '" + s + "'");
}

const char* match_name(MatchKind k) {
  switch (k) {
    case MatchKind::L2Landmarks: return "l2_landmarks";
    case MatchKind::L2Image: return "l2_image";
    case MatchKind::CurrentMMD: return "current";
  }
  return "";
}

std::optional<MatchKind> parse_match(const std::string& s) {
  if (s == "auto") return std::nullopt;
  if (s == "l2_landmarks") return MatchKind::L2Landmarks;
  if (s == "l2_image") return MatchKind::L2Image;
  if (s == "current") return MatchKind::CurrentMMD;
  throw InvalidInput("unknown match kind '" + s + "'");
}

json prior_json(const ParamPrior& p) {
  if (p.kind == ParamPrior::Kind::Uniform) return {{"uniform", {p.a, p.b}}};
  return {{"normal", {p.a, p.b}}};
}

ParamPrior parse_prior(const json& j, const std::string& where) {
  only_keys(j, where, {"uniform", "normal"});
  if (j.size() != 1) throw InvalidInput(where + ": give exactly one of uniform, normal");
  const bool uniform = j.contains("uniform");
  const json& args = uniform ? j.at("uniform") : j.at("normal");
  if (!args.is_array() || args.size() != 2 || !args[0].is_number() || !args[1].is_number()) {
    throw InvalidInput(where + ": expected two numbers");
  }
  const double a = args[0].get<double>(), b = args[1].get<double>();
  ParamPrior p = uniform ? ParamPrior::uniform(a, b) : ParamPrior::normal(a, b);
  p.validate();
  return p;
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.shooting.num_steps = 10;
  cfg.shooting.scheme = Scheme::RK2;
  cfg.shooting.kernel = KernelSpec{KernelFamily::Gaussian, 2.0 / 32.0, 1.0};
  cfg.shooting.optimizer = OptimizerConfig{0.05, 300, 100.0, 1e-9};
  cfg.shooting.match.weight = 100.0;
  cfg.shooting.match.current_kernel = KernelSpec{KernelFamily::Gaussian, 0.1, 1.0};
  cfg.mcmc.chains = 4;
  cfg.mcmc.iterations = 5000;
  cfg.mcmc.burn_in = 2000;
  return cfg;
}

ShootingConfig RunConfig::shooting_for(ShapeKind kind) const {
  ShootingConfig s = shooting;
  s.match.kind = match_kind ? *match_kind : default_match_kind(kind);
  return s;
}

std::string RunConfig::dump() const {
  json priors = json::array();
  for (const auto& p : this->priors.beta) priors.push_back(prior_json(p));
  const auto& o = shooting.optimizer;
  json j = {
      {"version", version},
      {"seed", seed},
      {"kernel", {{"lengthscale", shooting.kernel.lengthscale},
                  {"amplitude", shooting.kernel.amplitude}}},
      {"shooting", {{"num_steps", shooting.num_steps},
                    {"scheme", scheme_name(shooting.scheme)},
                    {"cfl_limit", shooting.cfl_limit}}},
      {"optimizer", {{"step_size", o.step_size},
                     {"max_iters", o.max_iters},
                     {"grad_clip_norm", o.grad_clip_norm},
                     {"tolerance", o.tolerance}}},
      {"match", {{"kind", match_kind ? match_name(*match_kind) : "auto"},
                 {"weight", shooting.match.weight},
                 {"current_lengthscale", shooting.match.current_kernel.lengthscale}}},
      {"prealign", {{"enabled", prealign.enabled},
                    {"step_size", prealign.fit.step_size},
                    {"max_iters", prealign.fit.max_iters},
                    {"tolerance", prealign.fit.tolerance}}},
      {"surrogate", {{"filter_fraction", surrogate.filter_fraction},
                     {"holdout_fraction", surrogate.holdout_fraction},
                     {"variance_fraction", surrogate.variance_fraction},
                     {"gp_restarts", surrogate.gp_restarts},
                     {"gp_max_iters", surrogate.gp_max_iters}}},
      {"likelihood", {{"sigma", likelihood.sigma},
                      {"model_error", likelihood.include_model_error},
                      {"discrepancy", likelihood.include_discrepancy},
                      {"data_term", likelihood.include_data_term}}},
      {"priors", {{"beta", priors}, {"xi_sigma", this->priors.xi_sigma}}},
      {"mcmc", {{"chains", mcmc.chains},
                {"iterations", mcmc.iterations},
                {"burn_in", mcmc.burn_in},
                {"thin", mcmc.thin},
                {"mala", mcmc.mala},
                {"initial_scale", mcmc.initial_scale}}},
      {"predict", {{"draws", predict_draws}}},
  };
  return j.dump(2);
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config is not valid JSON: ") + e.what());
  }
  only_keys(j, "config", {"version", "seed", "kernel", "shooting", "optimizer", "match",
                          "prealign", "surrogate", "likelihood", "priors", "mcmc", "predict"});
  if (!j.contains("version")) throw InvalidInput("config has no 'version' field");
  RunConfig cfg = default_config();
  read(j, "version", cfg.version, "config");
  if (cfg.version != kConfigVersion) {
    throw InvalidInput("config version " + std::to_string(cfg.version) + " is not supported (expected " +
                       std::to_string(kConfigVersion) + ")");
  }
  read(j, "seed", cfg.seed, "config");

  if (j.contains("kernel")) {
    const json& k = j["kernel"];
    only_keys(k, "kernel", {"lengthscale", "amplitude"});
    read(k, "lengthscale", cfg.shooting.kernel.lengthscale, "kernel");
    read(k, "amplitude", cfg.shooting.kernel.amplitude, "kernel");
  }
  if (j.contains("shooting")) {
    const json& s = j["shooting"];
    only_keys(s, "shooting", {"num_steps", "scheme", "cfl_limit"});
    read(s, "num_steps", cfg.shooting.num_steps, "shooting");
    read(s, "cfl_limit", cfg.shooting.cfl_limit, "shooting");
    std::string scheme = scheme_name(cfg.shooting.scheme);
    read(s, "scheme", scheme, "shooting");
    cfg.shooting.scheme = parse_scheme(scheme);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    only_keys(o, "optimizer", {"step_size", "max_iters", "grad_clip_norm", "tolerance"});
    read(o, "step_size", cfg.shooting.optimizer.step_size, "optimizer");
    read(o, "max_iters", cfg.shooting.optimizer.max_iters, "optimizer");
    read(o, "grad_clip_norm", cfg.shooting.optimizer.grad_clip_norm, "optimizer");
    read(o, "tolerance", cfg.shooting.optimizer.tolerance, "optimizer");
  }
  if (j.contains("match")) {
    const json& m = j["match"];
    only_keys(m, "match", {"kind", "weight", "current_lengthscale"});
    std::string kind = "auto";
    read(m, "kind", kind, "match");
    cfg.match_kind = parse_match(kind);
    read(m, "weight", cfg.shooting.match.weight, "match");
    read(m, "current_lengthscale", cfg.shooting.match.current_kernel.lengthscale, "match");
  }
  if (j.contains("prealign")) {
    const json& p = j["prealign"];
    only_keys(p, "prealign", {"enabled", "step_size", "max_iters", "tolerance"});
    read(p, "enabled", cfg.prealign.enabled, "prealign");
    read(p, "step_size", cfg.prealign.fit.step_size, "prealign");
    read(p, "max_iters", cfg.prealign.fit.max_iters, "prealign");
    read(p, "tolerance", cfg.prealign.fit.tolerance, "prealign");
  }
  if (j.contains("surrogate")) {
    const json& s = j["surrogate"];
    only_keys(s, "surrogate", {"filter_fraction", "holdout_fraction", "variance_fraction",
                               "gp_restarts", "gp_max_iters"});
    read(s, "filter_fraction", cfg.surrogate.filter_fraction, "surrogate");
    read(s, "holdout_fraction", cfg.surrogate.holdout_fraction, "surrogate");
    read(s, "variance_fraction", cfg.surrogate.variance_fraction, "surrogate");
    read(s, "gp_restarts", cfg.surrogate.gp_restarts, "surrogate");
    read(s, "gp_max_iters", cfg.surrogate.gp_max_iters, "surrogate");
  }
  if (j.contains("likelihood")) {
    const json& l = j["likelihood"];
    only_keys(l, "likelihood", {"sigma", "model_error", "discrepancy", "data_term"});
    read(l, "sigma", cfg.likelihood.sigma, "likelihood");
    read(l, "model_error", cfg.likelihood.include_model_error, "likelihood");
    read(l, "discrepancy", cfg.likelihood.include_discrepancy, "likelihood");
    read(l, "data_term", cfg.likelihood.include_data_term, "likelihood");
  }
  if (j.contains("priors")) {
    const json& p = j["priors"];
    only_keys(p, "priors", {"beta", "xi_sigma"});
    read(p, "xi_sigma", cfg.priors.xi_sigma, "priors");
    if (p.contains("beta")) {
      if (!p["beta"].is_array()) throw InvalidInput("priors.beta must be an array");
      for (std::size_t i = 0; i < p["beta"].size(); ++i) {
        cfg.priors.beta.push_back(parse_prior(p["beta"][i], "priors.beta[" + std::to_string(i) + "]"));
      }
    }
  }
  if (j.contains("mcmc")) {
    const json& m = j["mcmc"];
    only_keys(m, "mcmc", {"chains", "iterations", "burn_in", "thin", "mala", "initial_scale"});
    read(m, "chains", cfg.mcmc.chains, "mcmc");
    read(m, "iterations", cfg.mcmc.iterations, "mcmc");
    read(m, "burn_in", cfg.mcmc.burn_in, "mcmc");
    read(m, "thin", cfg.mcmc.thin, "mcmc");
    read(m, "mala", cfg.mcmc.mala, "mcmc");
    read(m, "initial_scale", cfg.mcmc.initial_scale, "mcmc");
  }
  if (j.contains("predict")) {
    const json& p = j["predict"];
    only_keys(p, "predict", {"draws"});
    read(p, "draws", cfg.predict_draws, "predict");
  }

  cfg.shooting.validate();
  cfg.likelihood.validate();
  cfg.mcmc.validate();
  if (cfg.priors.xi_sigma <= 0.0) throw InvalidInput("priors.xi_sigma must be positive");
  const auto& s = cfg.surrogate;
  if (!(s.filter_fraction >= 0.0 && s.filter_fraction < 1.0)) {
    throw InvalidInput("surrogate.filter_fraction must lie in [0, 1)");
  }
  if (!(s.holdout_fraction > 0.0 && s.holdout_fraction < 1.0)) {
    throw InvalidInput("surrogate.holdout_fraction must lie in (0, 1)");
  }
  if (!(s.variance_fraction > 0.0 && s.variance_fraction <= 1.0)) {
    throw InvalidInput("surrogate.variance_fraction must lie in (0, 1]");
  }
  if (s.gp_restarts < 1 || s.gp_max_iters < 1) throw InvalidInput("GP restarts and iterations must be positive");
  if (cfg.predict_draws < 1) throw InvalidInput("predict.draws must be positive");
  if (!(cfg.prealign.fit.step_size > 0.0) || cfg.prealign.fit.max_iters < 1) {
    throw InvalidInput("invalid prealign settings");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(read_text(path));
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void apply_seed_override(RunConfig& cfg) {
  const char* env = std::getenv("DIFFCAL_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || *env == '-') {
    throw InvalidInput(std::string("DIFFCAL_SEED is not an unsigned integer: ") + env);
  }
  cfg.seed = v;
}

}  // namespace diffcal::cli
