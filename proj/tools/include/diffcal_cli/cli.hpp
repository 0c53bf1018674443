#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diffcal_cli/config.hpp"

namespace diffcal::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumerical = 4 };

// Parses `args` (without the program name), runs the subcommand and maps
// errors onto exit codes. Progress and errors go to `log`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

struct StageOptions {
  bool force = false;
  int jobs = 1;
};

struct GenToyOptions {
  std::filesystem::path out;
  std::optional<Eigen::Vector4d> beta;
  int lhs = 0;
  Eigen::Vector4d lower;
  Eigen::Vector4d upper;
  std::optional<std::uint64_t> seed;
  int size = 32;
};

// Each stage returns false when it found up-to-date outputs and did nothing.
bool gen_toy(const GenToyOptions& opt, const StageOptions& stage, std::ostream& log);

bool register_stage(const std::filesystem::path& mes, const std::filesystem::path& sims,
                    const RunConfig& cfg, const std::filesystem::path& out,
                    const StageOptions& stage, std::ostream& log);

bool fit_surrogate_stage(const std::filesystem::path& registrations, const RunConfig& cfg,
                         const std::filesystem::path& out, const StageOptions& stage,
                         std::ostream& log);

bool calibrate_stage(const std::filesystem::path& surrogate, const RunConfig& cfg,
                     const std::filesystem::path& out, bool prior_only,
                     const StageOptions& stage, std::ostream& log);

bool predict_stage(const std::filesystem::path& surrogate, const std::filesystem::path& chain,
                   const RunConfig& cfg, const std::filesystem::path& out,
                   const StageOptions& stage, std::ostream& log);

}  // namespace diffcal::cli
