#pragma once

// Command-line harness: JSON experiment configs, seeded runs, CSV/JSON
// outputs with a metadata sidecar per file.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace mfff::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kPass = 0, kToleranceFailure = 1, kConfigError = 2, kNumericalFailure = 3 };

/// Schema violations, one line per problem.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::vector<double>> snapshot_times;
};

/// Effective configuration of one run: defaults, then the config file, then
/// command-line flags.
struct ExperimentConfig {
  std::string experiment;
  nlohmann::json measure;
  int nodes = 2000;  // discretization of density measures
  nlohmann::json blocks = nlohmann::json::object();  // parameter blocks, defaults filled in
  std::vector<double> snapshot_times;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int workers = 0;  // 0: available parallelism

  /// Everything that influences outputs (the output directory and worker
  /// count do not).
  nlohmann::json resolved() const;
  /// FNV-1a 64 of resolved().dump(), as 16 hex digits.
  std::string hash() const;
};

const std::vector<std::string>& commands();

/// Validates a config file for `command` (nullopt: no file, built-in
/// defaults). Unknown keys and wrong types are collected and thrown together
/// as ConfigError.
ExperimentConfig load_config(const std::string& command, const std::optional<nlohmann::json>& file,
                             const Overrides& flags);

/// Runs a subcommand; progress and the final summary go to `log`.
int run_command(const std::string& command, const ExperimentConfig& cfg, std::ostream& log);

/// Entry point of the `mfff` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mfff::cli
