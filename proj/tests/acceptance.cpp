// Acceptance checks for the steady-state engine. Prints one PASS/FAIL line
// per criterion and exits nonzero when any criterion fails.

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <spdlog/spdlog.h>
#include <sstream>
#include <string>
#include <vector>

#include "ness/cli.hpp"
#include "ness/estimator.hpp"
#include "ness/exact.hpp"
#include "ness/observables.hpp"
#include "ness/optimize.hpp"
#include "ness/sampler.hpp"
#include "oracles.hpp"

using namespace ness;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path work_dir() {
  static const fs::path dir = fs::temp_directory_path() / "ness_acceptance";
  return dir;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (!std::getline(ss, cell, ',')) cell.clear();
      row[header[i]] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// First logged iteration whose cost is below `target`, or -1.
long first_below(const fs::path& run_dir, double target) {
  for (const auto& row : read_csv(run_dir / "log.csv"))
    if (std::stod(row.at("cost")) < target) return std::stol(row.at("iteration"));
  return -1;
}

RunConfig model_a_config(std::uint64_t seed, const std::string& name) {
  RunConfig c;
  c.model = ModelPreset::A;
  c.n_sites = 6;
  c.coupling = 0.105;
  c.anisotropy = 1.0;
  c.gamma = 0.2;
  c.delta = 0.05;
  c.alpha = c.beta_anc = 1;
  c.seed = seed;
  c.exact_sums = true;
  c.optimizer = OptimizerKind::NagdPlus;
  c.nagd_gamma = 0.99;
  c.nagd_restart = true;
  c.max_iter = 3000;
  c.pretrain_steps = 10;
  c.eval_every = 500;
  c.fidelity_every = 500;
  c.checkpoint_every = 3000;
  c.output = (work_dir() / name).string();
  return c;
}

RunConfig model_b_config(int n, double anisotropy, double gamma,
                         const std::string& name) {
  RunConfig c;
  c.model = ModelPreset::B;
  c.n_sites = n;
  c.coupling = 1.0;
  c.anisotropy = anisotropy;
  c.gamma = gamma;
  c.alpha = c.beta_anc = 2;
  c.exact_sums = true;
  c.optimizer = OptimizerKind::NagdPlus;
  c.max_iter = 10000;
  c.eval_every = 100;
  c.fidelity_every = 100;
  c.checkpoint_every = 10000;
  c.output = (work_dir() / name).string();
  return c;
}

DensityMatrix exact_state(const RunConfig& c) {
  return steady_state_ed(LindbladMap(c.chain(), c.drive()));
}

// Oracle soundness of the exact steady state.
Outcome criterion_1() {
  double worst_res = 0, worst_herm = 0, worst_trace = 0, min_eig = 1;
  for (int n = 2; n <= 6; ++n) {
    for (const bool is_a : {true, false}) {
      const DriveSpec drive = is_a ? DriveSpec::model_a(n, 0.2, 0.05) : DriveSpec::model_b(n, 0.2);
      const ChainSpec chain{n, is_a ? 0.105 : 1.0, 1.0};
      const LindbladMap map(chain, drive);
      const Eigen::MatrixXcd rho = steady_state_ed(map).matrix;
      Eigen::VectorXcd v(rho.size());
      for (Eigen::Index r = 0; r < rho.rows(); ++r)
        v.segment(r * rho.cols(), rho.cols()) = rho.row(r).transpose();
      // residual from the Kronecker superoperator where it fits in memory
      const double res = n <= 4
                             ? (oracle::superoperator(chain, drive) * v).norm()
                             : apply_lindbladian(map, rho).norm();
      worst_res = std::max(worst_res, res);
      worst_herm = std::max(worst_herm, (rho - rho.adjoint()).cwiseAbs().maxCoeff());
      worst_trace = std::max(worst_trace, std::abs(rho.trace() - 1.0));
      const Eigen::MatrixXcd h = 0.5 * (rho + rho.adjoint());
      min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(
                                      h, Eigen::EigenvaluesOnly)
                                      .eigenvalues()
                                      .minCoeff());
    }
  }
  const bool pass = worst_res < 1e-10 && worst_herm < 1e-10 &&
                    worst_trace < 1e-10 && min_eig > -1e-10;
  return {pass, fmt::format("residual {:.2e}, hermiticity {:.2e}, trace {:.2e}, "
                            "min eigenvalue {:.2e}",
                            worst_res, worst_herm, worst_trace, min_eig)};
}

// Network density against explicit enumeration of hidden and ancillary units.
Outcome criterion_2() {
  double worst_rho = 0, worst_fd = 0;
  const double h = 1e-5;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    const auto p = init_params(2, 1, 1, 1000 + draw, 0.5);
    const Eigen::VectorXd d_phase = Eigen::VectorXd::Zero(2);
    for (const auto x : all_pairs(2)) {
      const Complex ref = oracle::brute_force_rho(p, x.row, x.col, d_phase);
      worst_rho = std::max(worst_rho, std::abs(std::exp(log_rho(p, x)) - ref) / std::abs(ref));
      const auto d = log_derivatives(p, x);
      const Complex base = log_rho(p, x);
      auto unwrap = [&](Complex v) {
        return Complex(v.real(), base.imag() + std::remainder(v.imag() - base.imag(), 2 * M_PI));
      };
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        NdoParameters plus = p, minus = p;
        plus.flat()(k) += h;
        minus.flat()(k) -= h;
        const Complex fd = (unwrap(log_rho(plus, x)) - unwrap(log_rho(minus, x))) / (2 * h);
        worst_fd = std::max(worst_fd, std::abs(fd - d(k)) / std::max(1.0, std::abs(d(k))));
      }
    }
  }
  return {worst_rho < 1e-10 && worst_fd < 1e-6,
          fmt::format("rho rel err {:.2e}, derivative rel err {:.2e}", worst_rho, worst_fd)};
}

// Sample average over a full enumeration equals the exact cost.
Outcome criterion_3() {
  const int n = 4;
  const LindbladMap map(ChainSpec{n, 0.105, 1.0}, DriveSpec::model_a(n, 0.2, 0.05));
  const auto params = init_params(n, 1, 1, 4242, 0.3);
  const RhoProvider rho = [&](ConfigurationPair x) { return std::exp(log_rho(params, x)); };
  const double exact = exact_cost(map, rho, PairDomain::SectorZero);

  double z = 0, weighted = 0;
  for (const auto x : sector_zero_pairs(n)) {
    const double p = std::norm(rho(x));
    z += p;
    weighted += p * local_cost(params, map, x);
  }
  const double identity_err = rel_err(weighted / z, exact);
  // independent value from the Kronecker superoperator on the sector-projected state
  Eigen::VectorXcd v = Eigen::VectorXcd::Zero(Eigen::Index{1} << (2 * n));
  for (const auto x : sector_zero_pairs(n)) v(static_cast<Eigen::Index>(pair_index(x, n))) = rho(x);
  const ChainSpec chain{n, 0.105, 1.0};
  const double kron = (oracle::superoperator(chain, DriveSpec::model_a(n, 0.2, 0.05)) * v).squaredNorm() /
                      v.squaredNorm();
  const double oracle_err = rel_err(exact, kron);
  double reweight_err = 0;
  for (double beta : {0.15, 0.5, 1.0}) {
    const auto batch = enumerate_batch(params, PairDomain::SectorZero, beta);
    reweight_err = std::max(reweight_err, rel_err(estimate_cost(params, map, batch), exact));
  }
  return {identity_err < 1e-12 && oracle_err < 1e-12 && reweight_err < 1e-12,
          fmt::format("cost {:.10e}, identity rel err {:.2e}, Kronecker rel err {:.2e}, "
                      "reweighting rel err {:.2e}",
                      exact, identity_err, oracle_err, reweight_err)};
}

double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Uniform proposals and reweighted stationary frequencies.
Outcome criterion_4() {
  const int n = 3;
  const auto pairs = sector_zero_pairs(n);
  std::map<std::uint64_t, std::size_t> slot;
  for (std::size_t i = 0; i < pairs.size(); ++i) slot[pair_index(pairs[i], n)] = i;

  std::vector<double> counts(pairs.size(), 0.0);
  Rng rng(2024);
  ConfigurationPair x{0b101u, 0b101u};
  const int steps = 1000000, stride = 10;
  for (int t = 1; t <= steps; ++t) {
    x = propose(x, n, rng);
    if (t % stride == 0) counts[slot.at(pair_index(x, n))] += 1.0;
  }
  const double p_uniform = chi_square_p(
      counts, std::vector<double>(counts.size(), steps / stride / static_cast<double>(counts.size())));

  const auto params = init_params(n, 1, 1, 31, 0.6);
  const auto exact = enumerate_batch(params, PairDomain::SectorZero, 0.15);
  SamplerConfig cfg;
  cfg.beta_rw = 0.15;
  cfg.n_samples = 100000;
  cfg.n_chains = 20;
  cfg.thinning = 10;
  cfg.seed = 77;
  const auto batch = sample_pairs(params, cfg);
  std::vector<double> freq(pairs.size(), 0.0);
  for (const auto& y : batch.pairs) freq[slot.at(pair_index(y, n))] += 1.0;
  const double total = static_cast<double>(batch.size());
  double worst_sigma = 0;
  for (std::size_t i = 0; i < freq.size(); ++i) {
    const double p = exact.multiplicity[i];
    worst_sigma = std::max(worst_sigma, std::abs(freq[i] / total - p) /
                                            std::sqrt(p * (1 - p) / total));
  }
  return {p_uniform > 0.01 && worst_sigma < 3.0,
          fmt::format("uniformity p {:.3f}, largest frequency deviation {:.2f} sigma",
                      p_uniform, worst_sigma)};
}

struct ModelARun {
  RunConfig config;
  RunSummary summary;
};

// Three restarts; the one with the lowest final cost is kept. Selection uses
// only the variational cost.
const ModelARun& model_a_run() {
  static const ModelARun best = [] {
    ModelARun out;
    bool first = true;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto c = model_a_config(seed, fmt::format("model_a_seed{}", seed));
      const auto s = run(c);
      fmt::print("  model A seed {}: cost {:.3e}, fidelity {:.8f}\n", seed, s.final_cost,
                 s.fidelity.value_or(0.0));
      if (first || s.final_cost < out.summary.final_cost) out = {c, s};
      first = false;
    }
    return out;
  }();
  return best;
}

Outcome criterion_5() {
  const auto& [config, s] = model_a_run();
  const DensityMatrix rho0 = exact_state(config);
  const auto m0 = exact_magnetizations(rho0);
  const auto i0 = exact_bond_currents(rho0);
  const int n = config.n_sites;
  const double fid = s.fidelity.value_or(0.0);
  const double current_err = rel_err(s.bond_currents[0], i0[0]);
  const double boundary_err =
      std::max(rel_err(s.magnetizations[0], m0[0]), rel_err(s.magnetizations[n - 1], m0[n - 1]));
  // Bulk values are small, so their error is measured against the boundary
  // magnetization scale.
  double bulk_err = 0;
  for (int i = 1; i < n - 1; ++i)
    bulk_err = std::max(bulk_err, std::abs(s.magnetizations[i] - m0[i]) / std::abs(m0[0]));
  const bool pass = fid >= 0.9999 && current_err < 0.05 && boundary_err < 0.01 && bulk_err < 0.01;
  return {pass, fmt::format("seed {}, fidelity {:.8f}, I12 error {:.2f}%, boundary magnetization "
                            "error {:.2f}%, bulk magnetization error {:.2f}%",
                            config.seed, fid, 100 * current_err, 100 * boundary_err,
                            100 * bulk_err)};
}

// Plain gradient descent matches local observables but misses the current.
Outcome criterion_6() {
  auto c = model_a_config(model_a_run().config.seed, "model_a_sgd");
  c.optimizer = OptimizerKind::Sgd;
  c.learning_rate = 0.05;
  // the warm start belongs to the accelerated method; the baseline starts
  // from the random initialization
  c.pretrain_steps = 0;
  const auto s = run(c);
  const DensityMatrix rho0 = exact_state(c);
  const auto m0 = exact_magnetizations(rho0);
  const auto i0 = exact_bond_currents(rho0);
  const int n = c.n_sites;
  const double current_err = rel_err(s.bond_currents[0], i0[0]);
  const double boundary_err =
      std::max(rel_err(s.magnetizations[0], m0[0]), rel_err(s.magnetizations[n - 1], m0[n - 1]));
  const bool pass = current_err > 0.5 && boundary_err < 0.1;
  return {pass, fmt::format("fidelity {:.6f}, boundary magnetization error {:.2f}%, "
                            "I12 error {:.1f}%",
                            s.fidelity.value_or(0.0), 100 * boundary_err, 100 * current_err)};
}

// Best fidelity in the observable log and the iteration it was reached.
std::pair<double, long> best_fidelity(const fs::path& dir) {
  double best = 0;
  long at = -1;
  for (const auto& row : read_csv(dir / "observables.csv")) {
    if (row.at("fidelity").empty()) continue;
    const double f = std::stod(row.at("fidelity"));
    if (f > best) {
      best = f;
      at = std::stol(row.at("iteration"));
    }
  }
  return {best, at};
}

Outcome criterion_7() {
  const auto c = model_b_config(6, 1.0, 0.2, "model_b_n6");
  const auto s = run(c);
  const auto [best, at] = best_fidelity(c.output);
  const double final_fid = s.fidelity.value_or(0.0);
  // the maximally mixed state is already close to this NESS, so the trained
  // state must also beat it
  const int dim = 1 << c.n_sites;
  const DensityMatrix mixed{c.n_sites, Eigen::MatrixXcd::Identity(dim, dim) / double(dim)};
  const double mixed_fid = fidelity(mixed, exact_state(c));
  return {final_fid > 0.99 && final_fid > mixed_fid,
          fmt::format("final fidelity {:.5f} after {} iterations, best {:.5f} at iteration {}, "
                      "maximally mixed state {:.5f}",
                      final_fid, s.iterations, best, at, mixed_fid)};
}

// ED reference stored by the harness, so the N = 8 solve runs only once.
double exact_mean_current_of(const fs::path& dir) {
  std::ifstream is(dir / "final.json");
  return nlohmann::json::parse(is).at("exact").at("mean_current").get<double>();
}

Outcome criterion_8() {
  bool pass = true;
  std::string detail;
  for (double gamma : {0.2, 1.0}) {
    std::vector<double> currents;
    for (int n : {4, 6, 8}) {
      auto c = model_b_config(n, 0.5, gamma, fmt::format("transport_g{}_n{}", gamma, n));
      c.nagd_gamma = 0.99;
      c.nagd_restart = true;
      // weak dissipation relaxes slowly at N = 8
      c.max_iter = n == 8 ? 12000 : 3000;
      c.eval_every = 500;
      c.fidelity_every = c.checkpoint_every = c.max_iter;
      const auto s = run(c);
      const double ref = exact_mean_current_of(c.output);
      const double err = rel_err(s.mean_current, ref);
      pass = pass && err < 0.05;
      currents.push_back(s.mean_current);
      detail += fmt::format("gamma {} N {}: {:.5f} vs ED {:.5f} ({:.1f}%); ", gamma, n,
                            s.mean_current, ref, 100 * err);
    }
    const auto [lo, hi] = std::minmax_element(currents.begin(), currents.end());
    const double mean = (currents[0] + currents[1] + currents[2]) / 3.0;
    const double spread = (*hi - *lo) / std::abs(mean);
    pass = pass && spread < 0.05;
    detail += fmt::format("spread over N {:.1f}%; ", 100 * spread);
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

Outcome criterion_9() {
  // descent bound on every accepted step of the model A run
  const auto& a = model_a_run();
  long violations = 0, steps = 0;
  double worst = 0;
  for (const auto& row : read_csv(fs::path(a.config.output) / "log.csv")) {
    if (row.at("bound_gap").empty()) continue;
    ++steps;
    const double gap = std::stod(row.at("bound_gap"));
    const double slack = 1e-12 * std::abs(std::stod(row.at("cost")));
    if (gap < -slack) ++violations;
    worst = std::min(worst, gap);
  }
  const bool bound_ok = steps == a.config.max_iter && violations == 0;

  // stochastic reconfiguration with an identity metric is gradient descent
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(50), g(50);
  for (int i = 0; i < 50; ++i) {
    x(i) = normal(gen);
    g(i) = normal(gen);
  }
  const CovarianceMatrix id = CovarianceMatrix::Identity(50, 50);
  const double sr_diff = (sr_step(x, g, id, 0.05, 0.0) - sgd_step(x, g, 0.05)).cwiseAbs().maxCoeff();
  const bool sr_ok = sr_diff < 1e-14;

  // iterations to reach cost 1e-4 on the four-site pump/loss chain
  const double target = 1e-4;
  auto nagd = model_b_config(4, 1.0, 0.2, "speed_nagd");
  nagd.max_iter = 2000;
  nagd.fidelity_every = nagd.eval_every = 2000;
  run(nagd);
  const long it_nagd = first_below(nagd.output, target);
  auto sgd = nagd;
  sgd.optimizer = OptimizerKind::Sgd;
  sgd.learning_rate = 0.05;
  sgd.max_iter = 20000;
  sgd.fidelity_every = sgd.eval_every = sgd.checkpoint_every = 20000;
  sgd.output = (work_dir() / "speed_sgd").string();
  run(sgd);
  const long it_sgd = first_below(sgd.output, target);
  // an SGD run that never reaches the target counts as its full length
  const double sgd_count = it_sgd < 0 ? static_cast<double>(sgd.max_iter) : static_cast<double>(it_sgd);
  const double ratio = it_nagd > 0 ? sgd_count / static_cast<double>(it_nagd) : 0.0;
  const bool speed_ok = it_nagd > 0 && ratio >= 5.0;

  return {bound_ok && sr_ok && speed_ok,
          fmt::format("{} steps with {} bound violations (most negative gap {:.2e}); "
                      "SR vs SGD max diff {:.1e}; iterations to 1e-4: NAGD+ {}, SGD {}{} "
                      "(ratio {:.1f})",
                      steps, violations, worst, sr_diff, it_nagd, it_sgd < 0 ? ">" : "",
                      static_cast<long>(sgd_count), ratio)};
}

Outcome criterion_10() {
  std::vector<double> t(1000), v(1000);
  for (int i = 0; i < 1000; ++i) {
    t[i] = i;
    v[i] = 0.3 + 0.5 * std::pow(0.99, i);
  }
  const auto clean = fit_exponential(t, v);
  const double clean_err = std::max({rel_err(clean.limit, 0.3), rel_err(clean.amplitude, 0.5),
                                     rel_err(clean.rate, 0.99)});
  std::mt19937_64 gen(17);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& x : v) x += noise(gen);
  const auto f = fit_exponential(t, v);
  const double z = std::max({std::abs(f.limit - 0.3) / f.limit_error,
                             std::abs(f.amplitude - 0.5) / f.amplitude_error,
                             std::abs(f.rate - 0.99) / f.rate_error});
  const double p = shapiro_wilk(f.residuals).p_value;
  return {clean_err < 1e-8 && z < 3.0 && p > 0.01,
          fmt::format("noiseless rel err {:.1e}, noisy largest deviation {:.2f} SE, "
                      "Shapiro-Wilk p {:.3f}",
                      clean_err, z, p)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; runs every criterion unless some are listed"};
  std::vector<int> selected;
  app.add_option("criteria", selected, "criterion numbers to run")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.push_back(i);

  const std::vector<std::function<Outcome()>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  fs::create_directories(work_dir());
  spdlog::set_level(spdlog::level::warn);

  int failures = 0;
  for (int id : std::set<int>(selected.begin(), selected.end())) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[id - 1]();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("criterion {}: {} ({}) [{:.0f} s]\n", id, o.pass ? "PASS" : "FAIL", o.detail, secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
