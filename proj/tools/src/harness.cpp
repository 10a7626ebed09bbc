#include <chrono>
#include <cstdio>
#include <fmt/format.h>
#include <fstream>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <sstream>

#include "ness/cli.hpp"
#include "ness/errors.hpp"
#include "ness/estimator.hpp"
#include "ness/exact.hpp"
#include "ness/observables.hpp"

namespace ness {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

struct Observables {
  std::vector<double> magnetizations;
  std::vector<double> bond_currents;
  double mean_current = 0.0;
};

// Exact sums read the observables off the materialized network density;
// sampled runs estimate them from a fresh diagonal batch.
Observables measure(const RunConfig& config, const NdoParameters& params,
                    long iteration) {
  Observables out;
  const int n = config.n_sites;
  if (config.exact_sums) {
    const DensityMatrix rho = network_density(params);
    out.magnetizations = exact_magnetizations(rho);
    if (n >= 2) {
      out.bond_currents = exact_bond_currents(rho);
      out.mean_current = exact_mean_current(rho);
    }
    return out;
  }
  SamplerConfig sc = config.sampler(derive_seed(
      config.seed, Stream::kDiagonalSampler, static_cast<std::uint64_t>(iteration)));
  sc.n_samples = config.n_diag_samples;
  const DiagonalBatch batch = sample_diagonal(params, sc);
  for (int i = 1; i <= n; ++i)
    out.magnetizations.push_back(
        estimate_observable(params, magnetization_op(n, i), batch).value);
  for (int k = 1; k < n; ++k)
    out.bond_currents.push_back(
        estimate_observable(params, spin_current_op(n, k, k + 1), batch).value);
  if (n >= 2) out.mean_current = mean_current(params, config.chain(), batch).value;
  return out;
}

bool oracle_available(const RunConfig& config) {
  return config.exact_oracle && config.n_sites <= kMaxExactSites;
}

// Keeps the rows of a CSV whose first column satisfies `keep_row`.
template <class Pred>
void truncate_csv(const fs::path& path, Pred keep_row) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot resume: missing " + path.string());
  std::string header, line;
  std::getline(is, header);
  std::vector<std::string> keep;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (keep_row(std::stol(line.substr(0, line.find(','))))) keep.push_back(line);
  }
  is.close();
  std::ofstream os(path, std::ios::trunc);
  os << header << '\n';
  for (const auto& l : keep) os << l << '\n';
}

std::string observables_header(int n) {
  std::string h = "iteration";
  for (int i = 1; i <= n; ++i) h += fmt::format(",m_{}", i);
  for (int k = 1; k < n; ++k) h += fmt::format(",I_{}_{}", k, k + 1);
  return h + ",I_mean,cost,fidelity";
}

void write_checkpoints(const fs::path& dir, const RunConfig& config,
                       const OptimizerState& state, const NoiseTrigger& trigger) {
  save_checkpoint(dir / "checkpoint.bin",
                  Checkpoint{NdoParameters(config.shape(), state.x), config.seed,
                             static_cast<std::uint64_t>(state.iteration)});
  save_optimizer_state(dir / "optimizer.bin", state, trigger);
}

}  // namespace

RunSummary run(const RunConfig& config, bool resume) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };
  const fs::path dir(config.output);
  fs::create_directories(dir);
  save_config(dir / "config.yaml", config);

  const ChainSpec chain = config.chain();
  const LindbladMap map(chain, config.drive());
  const int n = config.n_sites;
  const NagdSettings nagd = config.nagd();

  std::optional<DensityMatrix> rho0;
  if (oracle_available(config)) rho0 = steady_state_ed(map);

  OptimizerState state;
  NoiseTrigger trigger(config.noise_window, config.noise_rel_tol, config.noise_ratio);
  const fs::path log_path = dir / "log.csv";
  const fs::path obs_path = dir / "observables.csv";
  if (resume && fs::exists(dir / "optimizer.bin")) {
    state = make_optimizer_state(Eigen::VectorXd::Zero(config.shape().param_count()), nagd);
    load_optimizer_state(dir / "optimizer.bin", state, trigger);
    if (state.x.size() != config.shape().param_count())
      throw ConfigError("optimizer state does not match the configured network");
    // Log rows are keyed by the step they start, observable rows by the
    // iteration they follow. A run that stopped off the evaluation cadence
    // wrote one extra observable row that an uninterrupted run would not.
    const long at = state.iteration;
    truncate_csv(log_path, [at](long it) { return it < at; });
    truncate_csv(obs_path, [&config, at](long it) {
      return it < at || (it == at && at % config.eval_every == 0);
    });
    spdlog::info("resuming at iteration {}", state.iteration);
  } else {
    NdoParameters params = init_params(
        config.shape(), derive_seed(config.seed, Stream::kInit, 0), config.init_stddev);
    Rng pre_rng(derive_seed(config.seed, Stream::kPretrain, 0));
    params = mse_pretrain(params, config.pretrain_steps, config.pretrain_subsample,
                          pre_rng);
    state = make_optimizer_state(params.flat(), nagd);
    std::ofstream(log_path, std::ios::trunc)
        << "iteration,cost,lipschitz,step_norm,n_eff,backtracks,noise,bound_gap,wall_time\n";
    std::ofstream(obs_path, std::ios::trunc) << observables_header(n) << '\n';
  }
  std::ofstream log(log_path, std::ios::app);
  std::ofstream obs(obs_path, std::ios::app);

  RunSummary summary;
  double last_cost = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> last_fidelity;

  auto record_observables = [&](long iteration, double cost) {
    const NdoParameters params(config.shape(), state.x);
    const Observables o = measure(config, params, iteration);
    std::optional<double> fid;
    if (rho0 && iteration % config.fidelity_every == 0)
      fid = fidelity(network_density(params), *rho0);
    std::string row = std::to_string(iteration);
    for (double m : o.magnetizations) row += "," + num(m);
    for (double c : o.bond_currents) row += "," + num(c);
    row += "," + num(o.mean_current) + "," + num(cost) + ",";
    if (fid) row += num(*fid);
    obs << row << '\n';
    obs.flush();
    return std::make_pair(o, fid);
  };

  try {
    while (state.iteration < config.max_iter) {
      const long t = state.iteration;
      const NdoParameters current(config.shape(), state.x);
      const SampleBatch batch =
          config.exact_sums
              ? enumerate_batch(current, PairDomain::SectorZero, config.beta_rw)
              : sample_pairs(current, config.sampler(derive_seed(
                                          config.seed, Stream::kPairSampler,
                                          static_cast<std::uint64_t>(t))));
      const BatchObjective objective(map, batch);

      double cost = 0.0, lipschitz = 0.0, step_norm = 0.0, n_eff = 0.0;
      std::optional<double> bound_gap;  // descent bound minus accepted cost
      int backtracks = 0;
      switch (config.optimizer) {
        case OptimizerKind::Sgd:
        case OptimizerKind::Sr: {
          const GradientEstimate g = objective.gradient(current);
          Eigen::VectorXd x_new =
              config.optimizer == OptimizerKind::Sgd
                  ? sgd_step(state.x, g.grad, config.learning_rate)
                  : sr_step(state.x, g.grad, estimate_s_matrix(current, batch),
                            config.learning_rate, config.sr_diag_shift);
          cost = g.cost;
          n_eff = g.n_effective;
          lipschitz = 1.0 / config.learning_rate;
          step_norm = (x_new - state.x).norm();
          state.x_prev = state.x;
          state.x = std::move(x_new);
          ++state.iteration;
          break;
        }
        case OptimizerKind::NagdPlus: {
          const NdoShape shape = config.shape();
          const auto cost_fn = [&](const Eigen::VectorXd& x) {
            return objective.cost(NdoParameters(shape, x));
          };
          const auto grad_fn = [&](const Eigen::VectorXd& x) {
            const GradientEstimate g = objective.gradient(NdoParameters(shape, x));
            n_eff = g.n_effective;
            return ObjectiveValue{g.cost, g.grad};
          };
          const StepDiagnostics d = nagd_plus_step(state, nagd, cost_fn, grad_fn);
          cost = d.cost_at_y;
          lipschitz = d.lipschitz;
          step_norm = d.step_norm;
          backtracks = d.backtracks;
          bound_gap = d.upper_bound - d.cost_new;
          break;
        }
      }

      bool noise = false;
      if (config.noise_injection && trigger.observe(cost)) {
        Rng noise_rng(derive_seed(config.seed, Stream::kNoise, static_cast<std::uint64_t>(t)));
        const NdoParameters kicked = inject_noise(
            NdoParameters(config.shape(), state.x), config.noise_scale, noise_rng);
        state.x = kicked.flat();
        state.x_prev = state.x;
        noise = true;
      }
      last_cost = cost;
      log << t << ',' << num(cost) << ',' << num(lipschitz) << ',' << num(step_norm)
          << ',' << num(n_eff) << ',' << backtracks << ',' << (noise ? 1 : 0) << ','
          << (bound_gap ? num(*bound_gap) : std::string()) << ',' << num(elapsed()) << '\n';

      if (state.iteration % config.eval_every == 0 || state.iteration == config.max_iter) {
        log.flush();
        const auto [o, fid] = record_observables(state.iteration, cost);
        if (fid) last_fidelity = fid;
      }
      if (state.iteration % config.checkpoint_every == 0)
        write_checkpoints(dir, config, state, trigger);
    }
  } catch (const NumericalError& e) {
    write_checkpoints(dir, config, state, trigger);
    throw NumericalError(fmt::format("{} (iteration {}, output {})", e.what(),
                                     state.iteration, dir.string()));
  }
  log.flush();
  write_checkpoints(dir, config, state, trigger);

  // Final observables and references.
  const NdoParameters params(config.shape(), state.x);
  const Observables o = measure(config, params, state.iteration);
  summary.iterations = state.iteration;
  summary.final_cost = last_cost;
  summary.magnetizations = o.magnetizations;
  summary.bond_currents = o.bond_currents;
  summary.mean_current = o.mean_current;

  json j;
  j["model"] = to_string(config.model);
  j["n_sites"] = n;
  j["coupling"] = config.coupling;
  j["anisotropy"] = config.anisotropy;
  j["gamma"] = config.gamma;
  j["delta"] = config.delta;
  j["optimizer"] = to_string(config.optimizer);
  j["exact_sums"] = config.exact_sums;
  j["iterations"] = summary.iterations;
  j["final_cost"] = std::isfinite(last_cost) ? json(last_cost) : json(nullptr);
  j["magnetizations"] = o.magnetizations;
  j["bond_currents"] = o.bond_currents;
  j["mean_current"] = o.mean_current;
  if (rho0) {
    summary.fidelity = fidelity(network_density(params), *rho0);
    j["fidelity"] = *summary.fidelity;
    j["exact"] = {{"magnetizations", exact_magnetizations(*rho0)},
                  {"bond_currents", n >= 2 ? exact_bond_currents(*rho0) : std::vector<double>{}},
                  {"mean_current", n >= 2 ? exact_mean_current(*rho0) : 0.0}};
  }

  // Exponential extrapolation of the mean current trace.
  {
    std::ifstream is(obs_path);
    std::string line;
    std::getline(is, line);
    std::vector<double> ts, vs;
    const int mean_col = 1 + n + (n - 1);
    while (std::getline(is, line)) {
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (static_cast<int>(cells.size()) > mean_col) {
        ts.push_back(std::stod(cells[0]));
        vs.push_back(std::stod(cells[mean_col]));
      }
    }
    if (n >= 2 && ts.size() >= 10) {
      try {
        const FitResult fit = fit_exponential(ts, vs);
        j["current_fit"] = {{"limit", fit.limit},
                            {"amplitude", fit.amplitude},
                            {"rate", fit.rate},
                            {"limit_error", fit.limit_error},
                            {"residual_rms", fit.residual_rms},
                            {"degenerate", fit.degenerate}};
      } catch (const NumericalError& e) {
        spdlog::warn("current extrapolation failed: {}", e.what());
      }
    }
  }
  summary.wall_time = elapsed();
  j["wall_time"] = summary.wall_time;
  std::ofstream(dir / "final.json", std::ios::trunc) << j.dump(2) << '\n';
  return summary;
}

// ---------------------------------------------------------------------------

std::vector<CompareRow> compare(const std::vector<fs::path>& dirs, bool mixed) {
  if (dirs.empty()) throw ConfigError("compare needs at least one run directory");
  std::vector<CompareRow> rows;
  std::optional<json> reference;
  for (const auto& d : dirs) {
    std::ifstream is(d / "final.json");
    if (!is) throw ConfigError("no final.json in " + d.string());
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("unreadable {}: {}", (d / "final.json").string(), e.what()));
    }
    if (!mixed) {
      if (!reference) {
        reference = j;
      } else {
        for (const char* key : {"model", "coupling", "anisotropy", "gamma", "delta"})
          if (j.at(key) != reference->at(key))
            throw IncompatibleRuns(fmt::format("runs differ in '{}': {} vs {}", key,
                                               reference->at(key).dump(), j.at(key).dump()));
      }
    }
    CompareRow r;
    r.run = d.string();
    r.model = j.at("model").get<std::string>();
    r.n_sites = j.at("n_sites").get<int>();
    r.optimizer = j.at("optimizer").get<std::string>();
    r.iterations = j.at("iterations").get<long>();
    r.final_cost = j.at("final_cost").is_null() ? std::nan("") : j.at("final_cost").get<double>();
    if (j.contains("fidelity")) r.fidelity = j.at("fidelity").get<double>();
    r.mean_current = j.at("mean_current").get<double>();
    const auto& bonds = j.at("bond_currents");
    r.current_12 = bonds.empty() ? 0.0 : bonds.at(0).get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    rows.push_back(r);
  }
  return rows;
}

std::string format_compare_csv(const std::vector<CompareRow>& rows) {
  std::string out =
      "run,model,n_sites,optimizer,iterations,final_cost,fidelity,I_mean,I_1_2,wall_time\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.run, r.model, r.n_sites,
                       r.optimizer, r.iterations, num(r.final_cost),
                       r.fidelity ? num(*r.fidelity) : "", num(r.mean_current),
                       num(r.current_12), num(r.wall_time));
  return out;
}

std::string exact_report(const RunConfig& config,
                         const std::optional<fs::path>& checkpoint) {
  config.validate();
  const LindbladMap map(config.chain(), config.drive());
  const DensityMatrix rho0 = steady_state_ed(map);
  const int n = config.n_sites;
  json j;
  j["model"] = to_string(config.model);
  j["n_sites"] = n;
  j["magnetizations"] = exact_magnetizations(rho0);
  if (n >= 2) {
    j["bond_currents"] = exact_bond_currents(rho0);
    j["mean_current"] = exact_mean_current(rho0);
  }
  if (checkpoint) {
    const Checkpoint ck = load_checkpoint(*checkpoint);
    if (!(ck.params.shape().n_sites == n))
      throw ConfigError("checkpoint chain length does not match the configuration");
    const DensityMatrix rho = network_density(ck.params);
    json c;
    c["iteration"] = ck.iteration;
    c["fidelity"] = fidelity(rho, rho0);
    c["magnetizations"] = exact_magnetizations(rho);
    if (n >= 2) {
      c["bond_currents"] = exact_bond_currents(rho);
      c["mean_current"] = exact_mean_current(rho);
    }
    j["checkpoint"] = c;
  }
  return j.dump(2);
}

}  // namespace ness
