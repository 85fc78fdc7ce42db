#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "fdivlab/cli/config.hpp"
#include "fdivlab/cli/scenario.hpp"
#include "fdivlab/error.hpp"

using namespace fdivlab;

int main(int argc, char** argv) {
  CLI::App app{"f-divergence and filter-stability experiments"};
  app.set_version_flag("--version", cli::version());
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir;

  auto* run = app.add_subcommand("run", "Run a scenario and write CSV/JSON reports");
  run->add_option("config", config_path, "Scenario file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--threads", threads, "Cap on worker threads (0: hardware)")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out_dir, "Output directory");

  auto* validate = app.add_subcommand("validate", "Parse and validate a scenario file");
  validate->add_option("config", config_path, "Scenario file")->required();

  auto* list = app.add_subcommand("list-scenarios", "List shipped scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*list) {
      for (const auto& s : cli::list_scenarios(cli::default_scenario_dir())) {
        std::printf("%-28s %-16s %s\n", std::filesystem::path(s.file).filename().c_str(), s.kind.c_str(), s.description.c_str());
      }
      return 0;
    }
    const cli::ScenarioConfig config = cli::load_config(config_path);
    if (*validate) {
      std::printf("ok: %s (%s)\n", config_path.c_str(), cli::to_string(config.kind).c_str());
      return 0;
    }
    cli::RunOptions opts;
    if (seed_opt->count() > 0) opts.seed = seed;
    opts.threads = threads;
    opts.out_dir = cli::resolve_output_dir(out_dir, config);
    const cli::RunManifest man = cli::run_scenario(config, opts);
    for (const auto& c : man.checks) {
      std::printf("%s %s%s%s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.empty() ? "" : "  ",
                  c.detail.c_str());
    }
    for (const auto& f : man.outputs) std::printf("wrote %s/%s\n", opts.out_dir.c_str(), f.c_str());
    return man.exit_code();
  } catch (const Error& e) {
    std::fprintf(stderr, "fdivlab: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fdivlab: %s\n", e.what());
    return 1;
  }
}
