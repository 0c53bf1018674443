#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "diffcal/calibration.hpp"
#include "diffcal/prealign.hpp"
#include "diffcal/shooting.hpp"

namespace diffcal::cli {

inline constexpr int kConfigVersion = 1;

struct PrealignSection {
  bool enabled = false;
  RigidFitConfig fit{};
};

struct SurrogateSection {
  double filter_fraction = 0.10;
  double holdout_fraction = 0.20;
  double variance_fraction = 0.99;
  int gp_restarts = 5;
  int gp_max_iters = 100;
};

struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 0;
  // Registration: kernel, integrator, optimizer and matching term.
  ShootingConfig shooting{};
  // Unset means the default for the shape representation.
  std::optional<MatchKind> match_kind;
  PrealignSection prealign{};
  SurrogateSection surrogate{};
  LikelihoodSpec likelihood{};
  PriorSpec priors{};
  McmcConfig mcmc{};
  int predict_draws = 200;

  // Shooting configuration with the match kind resolved for `kind`.
  ShootingConfig shooting_for(ShapeKind kind) const;
  // Canonical JSON text; also the basis of the stage fingerprints.
  std::string dump() const;
};

RunConfig default_config();

// Throws InvalidInput on syntax errors, version mismatch, unknown keys or
// out-of-range values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// DIFFCAL_SEED, when set, replaces the config seed.
void apply_seed_override(RunConfig& cfg);

}  // namespace diffcal::cli
