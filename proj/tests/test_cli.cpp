#include <gtest/gtest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ness/cli.hpp"
#include "ness/errors.hpp"

using namespace ness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ness_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// CSV text with the trailing wall_time column removed from every row.
std::string without_last_column(const fs::path& p) {
  std::ifstream is(p);
  std::string line, out;
  while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + '\n';
  return out;
}

RunConfig small_config(const fs::path& out) {
  RunConfig c;
  c.n_sites = 3;
  c.n_samples = 200;
  c.max_iter = 20;
  c.pretrain_steps = 2;
  c.eval_every = 5;
  c.fidelity_every = 10;
  c.checkpoint_every = 10;
  c.n_diag_samples = 500;
  c.output = out.string();
  return c;
}

int call(std::vector<std::string> args) {
  args.insert(args.begin(), "nessvmc");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(Config, RoundTrip) {
  RunConfig c;
  c.model = ModelPreset::Custom;
  c.n_sites = 2;
  c.gamma_plus = {0.1, 1.0 / 3.0};
  c.gamma_minus = {0.0, 0.2};
  c.coupling = 0.1 + 0.2;
  c.optimizer = OptimizerKind::Sr;
  c.seed = 123456789012345ull;
  c.nagd_restart = true;
  c.output = "some/dir";
  EXPECT_EQ(parse_config(dump_config(c)), c);
  EXPECT_EQ(parse_config(dump_config(RunConfig{})), RunConfig{});
  const auto path = scratch("roundtrip.yaml");
  save_config(path, c);
  EXPECT_EQ(load_config(path), c);
  fs::remove(path);
}

TEST(Config, DefaultsAndOverrides) {
  const RunConfig c = parse_config("model: B\nn_sites: 4\noptimizer: sgd\n");
  EXPECT_EQ(c.model, ModelPreset::B);
  EXPECT_EQ(c.n_sites, 4);
  EXPECT_EQ(c.optimizer, OptimizerKind::Sgd);
  EXPECT_EQ(c.coupling, 0.105);
  EXPECT_EQ(c.beta_rw, 0.15);
  EXPECT_EQ(c.drive(), DriveSpec::model_b(4, 0.2));
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(parse_config(""), RunConfig{});
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("n_sites: 4\nbogus_key: 1\n"), ConfigError);
  EXPECT_THROW(parse_config("n_sites: [1, 2\n"), ConfigError);
  EXPECT_THROW(parse_config("n_sites: four\n"), ConfigError);
  EXPECT_THROW(parse_config("model: C\n"), ConfigError);
  EXPECT_THROW(parse_config("- 1\n- 2\n"), ConfigError);
  EXPECT_THROW(parse_config("beta_rw: 0\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("nagd_gamma: 1.0\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("model: custom\nn_sites: 2\ngamma_plus: [0.1]\ngamma_minus: [0.1, 0.1]\n").validate(),
               ConfigError);
  EXPECT_THROW(load_config(scratch("missing.yaml")), ConfigError);
}

TEST(Run, WritesOutputsAndIsDeterministic) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  const RunSummary s = run(small_config(a));
  run(small_config(b));
  for (const char* f : {"config.yaml", "log.csv", "observables.csv", "checkpoint.bin", "optimizer.bin", "final.json"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(s.iterations, 20);
  ASSERT_TRUE(s.fidelity.has_value());
  EXPECT_GT(*s.fidelity, 0.0);
  EXPECT_EQ(without_last_column(a / "log.csv"), without_last_column(b / "log.csv"));
  EXPECT_EQ(slurp(a / "observables.csv"), slurp(b / "observables.csv"));
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
  // 20 log rows plus the header; observables every 5 iterations
  const auto log = without_last_column(a / "log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 21);
  const auto obs = slurp(a / "observables.csv");
  EXPECT_EQ(std::count(obs.begin(), obs.end(), '\n'), 5);
  const auto j = nlohmann::json::parse(slurp(a / "final.json"));
  EXPECT_EQ(j.at("iterations").get<long>(), 20);
  EXPECT_EQ(j.at("magnetizations").size(), 3u);
  EXPECT_TRUE(j.contains("exact"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, ResumeReproducesUninterruptedRun) {
  for (const bool restart : {false, true}) {
    const auto full = scratch("resume_full"), part = scratch("resume_part");
    RunConfig c = small_config(full);
    c.nagd_restart = restart;
    c.nagd_dynamic_gamma = restart;
    c.eval_every = 4;
    run(c);
    RunConfig p = c;
    p.output = part.string();
    p.max_iter = 10;
    run(p);
    p.max_iter = 20;
    run(p, true);
    EXPECT_EQ(without_last_column(full / "log.csv"), without_last_column(part / "log.csv"));
    EXPECT_EQ(slurp(full / "observables.csv"), slurp(part / "observables.csv"));
    EXPECT_EQ(slurp(full / "checkpoint.bin"), slurp(part / "checkpoint.bin"));
    EXPECT_EQ(slurp(full / "optimizer.bin"), slurp(part / "optimizer.bin"));
    fs::remove_all(full);
    fs::remove_all(part);
  }
}

TEST(Run, OtherOptimizersAndExactSums) {
  for (const auto kind : {OptimizerKind::Sgd, OptimizerKind::Sr}) {
    const auto d = scratch("opt");
    RunConfig c = small_config(d);
    c.optimizer = kind;
    c.max_iter = 5;
    EXPECT_EQ(run(c).iterations, 5);
    fs::remove_all(d);
  }
  const auto d = scratch("exact_sums");
  RunConfig c = small_config(d);
  c.exact_sums = true;
  c.max_iter = 30;
  const auto s = run(c);
  EXPECT_TRUE(std::isfinite(s.final_cost));
  fs::remove_all(d);
}

TEST(Compare, TabulatesCompatibleRunsAndRejectsMixed) {
  const auto a = scratch("cmp_a"), b = scratch("cmp_b"), m = scratch("cmp_m");
  RunConfig c = small_config(a);
  c.max_iter = 3;
  run(c);
  c.output = b.string();
  c.n_sites = 4;
  run(c);
  c.output = m.string();
  c.model = ModelPreset::B;
  run(c);
  const auto rows = compare({a, b});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].n_sites, 4);
  const auto csv = format_compare_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_THROW(compare({a, m}), IncompatibleRuns);
  EXPECT_EQ(compare({a, m}, true).size(), 2u);
  EXPECT_THROW(compare({scratch("nothing")}), ConfigError);
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(m);
}

TEST(Exact, ReportWithCheckpoint) {
  const auto d = scratch("exact_report");
  RunConfig c = small_config(d);
  c.max_iter = 2;
  run(c);
  const auto j = nlohmann::json::parse(exact_report(c, d / "checkpoint.bin"));
  EXPECT_EQ(j.at("magnetizations").size(), 3u);
  EXPECT_GT(j.at("checkpoint").at("fidelity").get<double>(), 0.0);
  fs::remove_all(d);
}

TEST(Cli, ExitCodes) {
  const auto d = scratch("exit_codes");
  fs::create_directories(d);
  const auto cfg = d / "c.yaml";
  RunConfig c = small_config(d / "out");
  c.max_iter = 2;
  save_config(cfg, c);
  EXPECT_EQ(call({"-q", "run", cfg.string()}), 0);
  EXPECT_EQ(call({"-q", "run", cfg.string(), "--max-iter", "3", "--seed", "4", "--exact-sums"}), 0);
  EXPECT_EQ(call({"-q", "compare", (d / "out").string()}), 0);
  EXPECT_EQ(call({"-q", "exact", cfg.string()}), 0);
  EXPECT_EQ(call({"-q", "run", (d / "missing.yaml").string()}), 1);
  std::ofstream(d / "bad.yaml") << "nonsense_key: 3\n";
  EXPECT_EQ(call({"-q", "run", (d / "bad.yaml").string()}), 1);
  EXPECT_EQ(call({"-q", "frobnicate"}), 1);
  EXPECT_EQ(call({"-q"}), 1);
  std::ofstream(d / "big.yaml") << "n_sites: 9\nmax_iter: 0\noutput: " << (d / "big").string() << "\n";
  EXPECT_EQ(call({"-q", "exact", (d / "big.yaml").string()}), 2);
  fs::remove_all(d);
}
