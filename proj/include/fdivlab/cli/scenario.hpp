#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdivlab/cli/config.hpp"

namespace fdivlab::cli {

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config seed
  int threads = 0;                    // 0: hardware concurrency
  std::string out_dir;                // already resolved
};

/// One asserted invariant of a run.
struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct RunManifest {
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::string started;
  std::string finished;
  int threads = 0;
  std::vector<std::string> outputs;
  std::vector<Check> checks;

  bool pass() const;
  /// 0 if every check passed, 2 otherwise.
  int exit_code() const { return pass() ? 0 : 2; }
};

/// Runs the experiment, writes CSV and JSON reports plus a manifest into
/// options.out_dir, and returns the manifest.
RunManifest run_scenario(const ScenarioConfig& config, const RunOptions& options);

/// --out beats FDIVLAB_OUT, which beats the config's `output`; the default
/// is "fdivlab-out".
std::string resolve_output_dir(const std::string& flag, const ScenarioConfig& config);

struct ScenarioEntry {
  std::string file;
  std::string kind;
  std::string description;
};

/// Shipped scenario files, sorted by name. Unparseable files are listed
/// with kind "invalid".
std::vector<ScenarioEntry> list_scenarios(const std::string& dir);
std::string default_scenario_dir();
std::string version();

}  // namespace fdivlab::cli
