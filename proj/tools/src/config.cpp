#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <yaml-cpp/yaml.h>

#include "ness/cli.hpp"
#include "ness/errors.hpp"

namespace ness {

std::string to_string(ModelPreset m) {
  switch (m) {
    case ModelPreset::A: return "A";
    case ModelPreset::B: return "B";
    case ModelPreset::Custom: return "custom";
  }
  return "?";
}

std::string to_string(OptimizerKind o) {
  switch (o) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Sr: return "sr";
    case OptimizerKind::NagdPlus: return "nagd+";
  }
  return "?";
}

namespace {

ModelPreset parse_model(const std::string& s) {
  if (s == "A" || s == "a") return ModelPreset::A;
  if (s == "B" || s == "b") return ModelPreset::B;
  if (s == "custom") return ModelPreset::Custom;
  throw ConfigError("model must be A, B or custom, got '" + s + "'");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "sr") return OptimizerKind::Sr;
  if (s == "nagd+" || s == "nagd") return OptimizerKind::NagdPlus;
  throw ConfigError("optimizer must be sgd, sr or nagd+, got '" + s + "'");
}

// One entry per key, in document order. Each binding reads a YAML scalar or
// sequence into the config and writes it back out.
struct Binding {
  const char* key;
  std::function<void(RunConfig&, const YAML::Node&)> read;
  std::function<void(const RunConfig&, YAML::Emitter&)> write;
};

template <class T>
Binding field(const char* key, T RunConfig::*member) {
  return {key,
          [member](RunConfig& c, const YAML::Node& n) { c.*member = n.as<T>(); },
          [member](const RunConfig& c, YAML::Emitter& e) {
            if constexpr (std::is_same_v<T, double>) {
              e << YAML::Value << fmt::format("{}", c.*member);
            } else if constexpr (std::is_same_v<T, std::vector<double>>) {
              e << YAML::Value << YAML::Flow << YAML::BeginSeq;
              for (double v : c.*member) e << fmt::format("{}", v);
              e << YAML::EndSeq;
            } else {
              e << YAML::Value << c.*member;
            }
          }};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      {"model",
       [](RunConfig& c, const YAML::Node& n) { c.model = parse_model(n.as<std::string>()); },
       [](const RunConfig& c, YAML::Emitter& e) { e << YAML::Value << to_string(c.model); }},
      field("n_sites", &RunConfig::n_sites),
      field("coupling", &RunConfig::coupling),
      field("anisotropy", &RunConfig::anisotropy),
      field("gamma", &RunConfig::gamma),
      field("delta", &RunConfig::delta),
      field("gamma_plus", &RunConfig::gamma_plus),
      field("gamma_minus", &RunConfig::gamma_minus),
      field("alpha", &RunConfig::alpha),
      field("beta_anc", &RunConfig::beta_anc),
      field("seed", &RunConfig::seed),
      field("init_stddev", &RunConfig::init_stddev),
      field("beta_rw", &RunConfig::beta_rw),
      field("n_samples", &RunConfig::n_samples),
      field("n_burn_in", &RunConfig::n_burn_in),
      field("thinning", &RunConfig::thinning),
      field("n_chains", &RunConfig::n_chains),
      field("n_diag_samples", &RunConfig::n_diag_samples),
      {"optimizer",
       [](RunConfig& c, const YAML::Node& n) {
         c.optimizer = parse_optimizer(n.as<std::string>());
       },
       [](const RunConfig& c, YAML::Emitter& e) {
         e << YAML::Value << to_string(c.optimizer);
       }},
      field("learning_rate", &RunConfig::learning_rate),
      field("sr_diag_shift", &RunConfig::sr_diag_shift),
      field("nagd_gamma", &RunConfig::nagd_gamma),
      field("nagd_dynamic_gamma", &RunConfig::nagd_dynamic_gamma),
      field("nagd_restart", &RunConfig::nagd_restart),
      field("precondition", &RunConfig::precondition),
      field("belief_beta1", &RunConfig::belief_beta1),
      field("belief_beta2", &RunConfig::belief_beta2),
      field("belief_eps", &RunConfig::belief_eps),
      field("lipschitz_init", &RunConfig::lipschitz_init),
      field("noise_injection", &RunConfig::noise_injection),
      field("noise_window", &RunConfig::noise_window),
      field("noise_rel_tol", &RunConfig::noise_rel_tol),
      field("noise_ratio", &RunConfig::noise_ratio),
      field("noise_scale", &RunConfig::noise_scale),
      field("max_iter", &RunConfig::max_iter),
      field("pretrain_steps", &RunConfig::pretrain_steps),
      field("pretrain_subsample", &RunConfig::pretrain_subsample),
      field("eval_every", &RunConfig::eval_every),
      field("fidelity_every", &RunConfig::fidelity_every),
      field("checkpoint_every", &RunConfig::checkpoint_every),
      field("exact_sums", &RunConfig::exact_sums),
      field("exact_oracle", &RunConfig::exact_oracle),
      field("output", &RunConfig::output),
  };
  return table;
}

}  // namespace

ChainSpec RunConfig::chain() const {
  return ChainSpec{n_sites, coupling, anisotropy};
}

DriveSpec RunConfig::drive() const {
  switch (model) {
    case ModelPreset::A: return DriveSpec::model_a(n_sites, gamma, delta);
    case ModelPreset::B: return DriveSpec::model_b(n_sites, gamma);
    case ModelPreset::Custom: return DriveSpec{gamma_plus, gamma_minus};
  }
  throw ConfigError("unknown model preset");
}

NdoShape RunConfig::shape() const { return NdoShape{n_sites, alpha, beta_anc}; }

SamplerConfig RunConfig::sampler(std::uint64_t chain_seed) const {
  SamplerConfig s;
  s.beta_rw = beta_rw;
  s.n_samples = n_samples;
  if (n_burn_in >= 0) s.n_burn_in = n_burn_in;
  if (thinning >= 0) s.thinning = thinning;
  s.n_chains = n_chains;
  s.seed = chain_seed;
  return s;
}

NagdSettings RunConfig::nagd() const {
  NagdSettings s;
  s.gamma = nagd_gamma;
  s.dynamic_gamma = nagd_dynamic_gamma;
  s.restart_on_increase = nagd_restart;
  s.precondition = precondition;
  s.belief_beta1 = belief_beta1;
  s.belief_beta2 = belief_beta2;
  s.belief_eps = belief_eps;
  s.lipschitz_init = lipschitz_init;
  return s;
}

void RunConfig::validate() const {
  chain().validate();
  drive().validate(n_sites);
  shape().validate();
  if (n_sites > kMaxSites) throw ConfigError("n_sites exceeds the basis width");
  if (!(init_stddev > 0.0)) throw ConfigError("init_stddev must be positive");
  sampler(0).validate();
  if (n_diag_samples < 1) throw ConfigError("n_diag_samples must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(sr_diag_shift >= 0.0)) throw ConfigError("sr_diag_shift must be >= 0");
  if (!(nagd_gamma >= 0.0 && nagd_gamma < 1.0))
    throw ConfigError("nagd_gamma must lie in [0, 1)");
  if (!(belief_beta1 >= 0.0 && belief_beta1 < 1.0) ||
      !(belief_beta2 >= 0.0 && belief_beta2 < 1.0))
    throw ConfigError("belief decay rates must lie in [0, 1)");
  if (!(belief_eps > 0.0)) throw ConfigError("belief_eps must be positive");
  if (!(lipschitz_init > 0.0)) throw ConfigError("lipschitz_init must be positive");
  if (noise_window < 1) throw ConfigError("noise_window must be >= 1");
  if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be >= 0");
  if (max_iter < 0) throw ConfigError("max_iter must be >= 0");
  if (pretrain_steps < 0) throw ConfigError("pretrain_steps must be >= 0");
  if (pretrain_subsample < 1) throw ConfigError("pretrain_subsample must be >= 1");
  if (eval_every < 1 || fidelity_every < 1 || checkpoint_every < 1)
    throw ConfigError("cadences must be >= 1");
  if (exact_sums && n_sites > 10)
    throw ConfigError("exact sums are limited to n_sites <= 10");
  if (output.empty()) throw ConfigError("output directory must be set");
}

RunConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  RunConfig c;
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw ConfigError("configuration must be a key-value map");
  std::map<std::string, const Binding*> by_key;
  for (const auto& b : bindings()) by_key[b.key] = &b;
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
      it->second->read(c, kv.second);
    } catch (const YAML::Exception& e) {
      throw ConfigError(fmt::format("bad value for '{}': {}", key, e.what()));
    }
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read configuration " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& config) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  for (const auto& b : bindings()) {
    e << YAML::Key << b.key;
    b.write(config, e);
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write configuration " + path.string());
  os << dump_config(config);
}

}  // namespace ness
