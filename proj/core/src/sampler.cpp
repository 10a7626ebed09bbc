#include "ness/sampler.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <thread>

#include "ness/errors.hpp"

namespace ness {

int SamplerConfig::burn_in_steps(int n_sites) const {
  return n_burn_in.value_or(10 * n_sites * n_sites);
}

int SamplerConfig::thinning_stride(int n_sites) const {
  return thinning.value_or(n_sites);
}

void SamplerConfig::validate() const {
  if (!(beta_rw > 0.0 && beta_rw <= 1.0))
    throw ConfigError(fmt::format("beta_rw must lie in (0, 1], got {}", beta_rw));
  if (n_samples < 1) throw ConfigError("n_samples must be at least 1");
  if (n_chains < 1) throw ConfigError("n_chains must be at least 1");
  if (n_burn_in && *n_burn_in < 0) throw ConfigError("n_burn_in must be >= 0");
  if (thinning && *thinning < 1) throw ConfigError("thinning must be >= 1");
}

namespace {

void random_pair_of_sites(int n, Rng& rng, int& i, int& j) {
  i = uniform_int(rng, n);
  j = uniform_int(rng, n - 1);
  if (j >= i) ++j;
}

BasisState swap_sites(BasisState s, int i, int j) {
  const BasisState bi = (s >> i) & 1u;
  const BasisState bj = (s >> j) & 1u;
  if (bi == bj) return s;
  return s ^ ((BasisState{1} << i) | (BasisState{1} << j));
}

double checked_log_abs(Complex lr) {
  if (!std::isfinite(lr.real()) || !std::isfinite(lr.imag()))
    throw NonFiniteAmplitude(
        fmt::format("log rho evaluated to ({}, {})", lr.real(), lr.imag()));
  return lr.real();
}

// Runs `fn(chain_index)` for every chain on a small pool of threads. The
// per-chain results are written to distinct slots so the merge order is
// fixed by chain index.
template <class Fn>
void for_each_chain(int n_chains, Fn&& fn) {
  const int workers = std::clamp(
      static_cast<int>(std::thread::hardware_concurrency()), 1, n_chains);
  if (workers == 1) {
    for (int c = 0; c < n_chains; ++c) fn(c);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int c = w; c < n_chains; c += workers) fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int chain_share(int total, int n_chains, int chain) {
  return total / n_chains + (chain < total % n_chains ? 1 : 0);
}

}  // namespace

ConfigurationPair propose(ConfigurationPair x, int n_sites, Rng& rng) {
  assert(delta_sz(x) == 0);
  if (n_sites >= 2) {
    const bool on_row = uniform_int(rng, 2) == 0;
    int i, j;
    random_pair_of_sites(n_sites, rng, i, j);
    if (on_row)
      x.row = swap_sites(x.row, i, j);
    else
      x.col = swap_sites(x.col, i, j);
  }
  const int k = uniform_int(rng, n_sites);
  const int l = uniform_int(rng, n_sites);
  if (((x.row >> k) & 1u) == ((x.col >> l) & 1u)) {
    x.row ^= BasisState{1} << k;
    x.col ^= BasisState{1} << l;
  }
  assert(delta_sz(x) == 0);
  return x;
}

bool accept(double log_abs_old, double log_abs_new, double beta_rw, Rng& rng) {
  const double log_ratio = 2.0 * beta_rw * (log_abs_new - log_abs_old);
  if (log_ratio >= 0.0) return true;
  return uniform_real(rng) < std::exp(log_ratio);
}

bool accept(ConfigurationPair x, ConfigurationPair x_new,
            const NdoEvaluator& eval, double beta_rw, Rng& rng) {
  return accept(checked_log_abs(eval.log_rho(x)),
                checked_log_abs(eval.log_rho(x_new)), beta_rw, rng);
}

SampleBatch sample_pairs(const NdoParameters& params,
                         const SamplerConfig& config) {
  config.validate();
  const int n = params.shape().n_sites;
  const int burn_in = config.burn_in_steps(n);
  const int stride = config.thinning_stride(n);
  const NdoEvaluator eval(params, false);

  struct ChainResult {
    std::vector<ConfigurationPair> pairs;
    std::vector<Complex> log_rho;
    long accepted = 0;
    long steps = 0;
  };
  std::vector<ChainResult> chains(config.n_chains);

  for_each_chain(config.n_chains, [&](int c) {
    Rng rng(derive_seed(config.seed, Stream::kPairSampler,
                        static_cast<std::uint64_t>(c)));
    ChainResult& out = chains[c];
    const int count = chain_share(config.n_samples, config.n_chains, c);
    out.pairs.reserve(count);
    out.log_rho.reserve(count);

    const BasisState mask = (BasisState{1} << n) - 1;
    const BasisState start = static_cast<BasisState>(rng()) & mask;
    ConfigurationPair x{start, start};
    Complex lr = eval.log_rho(x);
    checked_log_abs(lr);

    auto step = [&] {
      const ConfigurationPair next = propose(x, n, rng);
      ++out.steps;
      if (next == x) {
        ++out.accepted;
        return;
      }
      const Complex lr_next = eval.log_rho(next);
      if (accept(lr.real(), checked_log_abs(lr_next), config.beta_rw, rng)) {
        x = next;
        lr = lr_next;
        ++out.accepted;
      }
    };
    for (int s = 0; s < burn_in; ++s) step();
    for (int s = 0; s < count; ++s) {
      for (int t = 0; t < stride; ++t) step();
      out.pairs.push_back(x);
      out.log_rho.push_back(lr);
    }
  });

  SampleBatch batch;
  batch.n_sites = n;
  batch.beta_rw = config.beta_rw;
  batch.thinning = stride;
  long accepted = 0, steps = 0;
  for (auto& c : chains) {
    batch.pairs.insert(batch.pairs.end(), c.pairs.begin(), c.pairs.end());
    batch.log_rho_values.insert(batch.log_rho_values.end(), c.log_rho.begin(),
                                c.log_rho.end());
    accepted += c.accepted;
    steps += c.steps;
  }
  batch.acceptance_rate =
      steps > 0 ? static_cast<double>(accepted) / static_cast<double>(steps) : 1.0;

  const double power = 2.0 - 2.0 * config.beta_rw;
  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& lr : batch.log_rho_values) shift = std::max(shift, power * lr.real());
  batch.log_weight_shift = shift;
  batch.weights.reserve(batch.size());
  for (const auto& lr : batch.log_rho_values)
    batch.weights.push_back(std::exp(power * lr.real() - shift));
  return batch;
}

SampleBatch enumerate_batch(const NdoParameters& params, PairDomain domain,
                            double beta_rw) {
  if (!(beta_rw > 0.0 && beta_rw <= 1.0))
    throw ConfigError("beta_rw must lie in (0, 1]");
  const int n = params.shape().n_sites;
  if (n > 10) throw TooLarge("enumeration batches limited to N <= 10");
  const NdoEvaluator eval(params, false);

  SampleBatch batch;
  batch.n_sites = n;
  batch.beta_rw = beta_rw;
  batch.pairs = enumerate_pairs(n, domain);
  batch.log_rho_values.reserve(batch.size());
  double max_re = -std::numeric_limits<double>::infinity();
  for (const auto& x : batch.pairs) {
    const Complex lr = eval.log_rho(x);
    checked_log_abs(lr);
    batch.log_rho_values.push_back(lr);
    max_re = std::max(max_re, lr.real());
  }
  const double power = 2.0 - 2.0 * beta_rw;
  batch.log_weight_shift = power * max_re;
  double z = 0.0;
  batch.multiplicity.reserve(batch.size());
  batch.weights.reserve(batch.size());
  for (const auto& lr : batch.log_rho_values) {
    const double d = lr.real() - max_re;
    batch.multiplicity.push_back(std::exp(2.0 * beta_rw * d));
    batch.weights.push_back(std::exp(power * d));
    z += batch.multiplicity.back();
  }
  for (double& m : batch.multiplicity) m /= z;
  return batch;
}

DiagonalBatch sample_diagonal(const NdoParameters& params,
                              const SamplerConfig& config) {
  config.validate();
  const int n = params.shape().n_sites;
  const int burn_in = config.burn_in_steps(n);
  const int stride = config.thinning_stride(n);
  const NdoEvaluator eval(params, false);

  struct ChainResult {
    std::vector<BasisState> configs;
    long accepted = 0;
    long steps = 0;
  };
  std::vector<ChainResult> chains(config.n_chains);

  for_each_chain(config.n_chains, [&](int c) {
    Rng rng(derive_seed(config.seed, Stream::kDiagonalSampler,
                        static_cast<std::uint64_t>(c)));
    ChainResult& out = chains[c];
    const int count = chain_share(config.n_samples, config.n_chains, c);
    out.configs.reserve(count);
    const BasisState mask = (BasisState{1} << n) - 1;
    BasisState s = static_cast<BasisState>(rng()) & mask;
    double log_p = checked_log_abs(eval.log_rho({s, s}));

    auto step = [&] {
      BasisState next;
      if (n >= 2 && uniform_int(rng, 2) == 0) {
        int i, j;
        random_pair_of_sites(n, rng, i, j);
        next = swap_sites(s, i, j);
      } else {
        next = s ^ (BasisState{1} << uniform_int(rng, n));
      }
      ++out.steps;
      if (next == s) {
        ++out.accepted;
        return;
      }
      // rho(s, s) is real and positive, so the chain targets it directly.
      const double log_next = checked_log_abs(eval.log_rho({next, next}));
      if (log_next >= log_p || uniform_real(rng) < std::exp(log_next - log_p)) {
        s = next;
        log_p = log_next;
        ++out.accepted;
      }
    };
    for (int t = 0; t < burn_in; ++t) step();
    for (int k = 0; k < count; ++k) {
      for (int t = 0; t < stride; ++t) step();
      out.configs.push_back(s);
    }
  });

  DiagonalBatch batch;
  batch.n_sites = n;
  batch.thinning = stride;
  long accepted = 0, steps = 0;
  for (auto& c : chains) {
    batch.configs.insert(batch.configs.end(), c.configs.begin(), c.configs.end());
    accepted += c.accepted;
    steps += c.steps;
  }
  batch.acceptance_rate =
      steps > 0 ? static_cast<double>(accepted) / static_cast<double>(steps) : 1.0;
  return batch;
}

void dump_batch(const std::filesystem::path& path, const SampleBatch& batch) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write batch dump " + path.string());
  auto put = [&os](auto v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  os.write("NESSBAT1", 8);
  put(static_cast<std::uint32_t>(batch.n_sites));
  put(std::uint32_t{0});
  put(static_cast<std::uint64_t>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    put(batch.pairs[i].row);
    put(batch.pairs[i].col);
    put(batch.log_rho_values[i].real());
    put(batch.log_rho_values[i].imag());
    put(batch.weights[i]);
  }
}

}  // namespace ness
