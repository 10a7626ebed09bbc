#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ness/model.hpp"
#include "ness/ndo.hpp"
#include "ness/optimize.hpp"
#include "ness/sampler.hpp"

namespace ness {

enum class ModelPreset { A, B, Custom };
enum class OptimizerKind { Sgd, Sr, NagdPlus };

// Everything a run needs, stored as one flat key-value document.
struct RunConfig {
  // Model
  ModelPreset model = ModelPreset::A;
  int n_sites = 6;
  double coupling = 0.105;
  double anisotropy = 1.0;
  double gamma = 0.2;
  double delta = 0.05;
  std::vector<double> gamma_plus;  // Custom only, one rate per site
  std::vector<double> gamma_minus;

  // Ansatz
  int alpha = 1;
  int beta_anc = 1;
  std::uint64_t seed = 1;
  double init_stddev = 0.1;

  // Sampler
  double beta_rw = 0.15;
  int n_samples = 2000;
  int n_burn_in = -1;  // -1 selects 10 N^2
  int thinning = -1;   // -1 selects N
  int n_chains = 1;
  int n_diag_samples = 10000;

  // Optimizer
  OptimizerKind optimizer = OptimizerKind::NagdPlus;
  double learning_rate = 0.05;  // SGD and SR
  double sr_diag_shift = 0.1;
  double nagd_gamma = 0.9;
  bool nagd_dynamic_gamma = false;
  bool nagd_restart = false;
  bool precondition = true;
  double belief_beta1 = 0.9;
  double belief_beta2 = 0.999;
  double belief_eps = 1e-8;
  double lipschitz_init = 1.0;
  bool noise_injection = true;
  int noise_window = 100;
  double noise_rel_tol = 1e-4;
  double noise_ratio = 10.0;
  double noise_scale = 1e-3;

  // Schedule
  int max_iter = 3000;
  int pretrain_steps = 10;
  int pretrain_subsample = 4096;
  int eval_every = 100;
  int fidelity_every = 100;
  int checkpoint_every = 500;

  // Modes and output
  bool exact_sums = false;
  bool exact_oracle = true;
  std::string output = "run";

  ChainSpec chain() const;
  DriveSpec drive() const;
  NdoShape shape() const;
  SamplerConfig sampler(std::uint64_t seed) const;
  NagdSettings nagd() const;

  // Throws ConfigError on any out-of-range field.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

std::string to_string(ModelPreset m);
std::string to_string(OptimizerKind o);

RunConfig parse_config(const std::string& yaml_text);
RunConfig load_config(const std::filesystem::path& path);
std::string dump_config(const RunConfig& config);
void save_config(const std::filesystem::path& path, const RunConfig& config);

struct RunSummary {
  long iterations = 0;
  double final_cost = 0.0;
  std::optional<double> fidelity;
  std::vector<double> magnetizations;
  std::vector<double> bond_currents;
  double mean_current = 0.0;
  double wall_time = 0.0;
};

// Warm start, optimization loop and result files in config.output:
//   config.yaml        resolved configuration
//   log.csv            iteration, cost, lipschitz, step_norm, n_eff,
//                      backtracks, noise, bound_gap, wall_time
//   observables.csv    iteration, m_i, I_k_k+1, I_mean, cost, fidelity
//   checkpoint.bin     network parameters
//   optimizer.bin      optimizer state for --resume
//   final.json         final observables and exact reference values
// With `resume` set, a run continues from the optimizer state in the output
// directory and reproduces the rows an uninterrupted run would write.
RunSummary run(const RunConfig& config, bool resume = false);

struct CompareRow {
  std::string run;
  std::string model;
  int n_sites = 0;
  std::string optimizer;
  long iterations = 0;
  double final_cost = 0.0;
  std::optional<double> fidelity;
  double mean_current = 0.0;
  double current_12 = 0.0;
  double wall_time = 0.0;
};

// Reads final.json from every directory. Unless `mixed` is set, all runs
// must share the model preset, couplings and drive strengths (chain length
// may differ) or IncompatibleRuns is thrown.
std::vector<CompareRow> compare(const std::vector<std::filesystem::path>& dirs,
                                bool mixed = false);
std::string format_compare_csv(const std::vector<CompareRow>& rows);

// Exact steady state of the configured model as JSON text, with the fidelity
// and observables of a checkpoint when one is given.
std::string exact_report(const RunConfig& config,
                         const std::optional<std::filesystem::path>& checkpoint);

// Command-line entry point; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace ness
