#include <CLI11.hpp>
#include <iostream>
#include <spdlog/spdlog.h>

#include "ness/cli.hpp"
#include "ness/errors.hpp"

namespace ness {

int cli_main(int argc, char** argv) {
  CLI::App app{"Variational steady states of boundary-driven XXZ chains"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_iter;
  std::optional<std::string> output;
  bool exact_sums = false;
  bool resume = false;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  auto* run_cmd = app.add_subcommand("run", "Optimize the network for a configuration");
  run_cmd->add_option("config", config_path, "YAML configuration")->required();
  run_cmd->add_flag("--exact-sums", exact_sums, "Replace Monte-Carlo batches by full sums");
  run_cmd->add_option("--seed", seed, "Master seed");
  run_cmd->add_option("--max-iter", max_iter, "Number of optimizer iterations");
  run_cmd->add_option("--output", output, "Output directory");
  run_cmd->add_flag("--resume", resume, "Continue from the state in the output directory");

  std::vector<std::string> dirs;
  bool mixed = false;
  auto* cmp_cmd = app.add_subcommand("compare", "Tabulate finished runs");
  cmp_cmd->add_option("dirs", dirs, "Run directories")->required();
  cmp_cmd->add_flag("--mixed", mixed, "Allow runs of different models");

  std::optional<std::string> checkpoint;
  auto* exact_cmd = app.add_subcommand("exact", "Exact steady state of a configuration");
  exact_cmd->add_option("config", config_path, "YAML configuration")->required();
  exact_cmd->add_option("--checkpoint", checkpoint, "Network checkpoint to compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*run_cmd) {
      RunConfig config = load_config(config_path);
      if (seed) config.seed = *seed;
      if (max_iter) config.max_iter = *max_iter;
      if (output) config.output = *output;
      if (exact_sums) config.exact_sums = true;
      const RunSummary s = run(config, resume);
      spdlog::info("finished {} iterations, cost {:.6g}{}", s.iterations, s.final_cost,
                   s.fidelity ? fmt::format(", fidelity {:.10f}", *s.fidelity) : "");
    } else if (*cmp_cmd) {
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      std::cout << format_compare_csv(compare(paths, mixed));
    } else if (*exact_cmd) {
      const RunConfig config = load_config(config_path);
      std::optional<std::filesystem::path> ck;
      if (checkpoint) ck = *checkpoint;
      std::cout << exact_report(config, ck) << '\n';
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

}  // namespace ness
