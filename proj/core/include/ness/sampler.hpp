#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ness/exact.hpp"
#include "ness/ndo.hpp"
#include "ness/rng.hpp"

namespace ness {

struct SamplerConfig {
  double beta_rw = 0.15;  // sample from |rho|^(2 beta_rw)
  int n_samples = 2000;
  std::optional<int> n_burn_in;  // default 10 N^2
  std::optional<int> thinning;   // default N
  int n_chains = 1;
  std::uint64_t seed = 0;

  int burn_in_steps(int n_sites) const;
  int thinning_stride(int n_sites) const;
  void validate() const;
};

// Pairs drawn from |rho_s|^(2 beta_rw) at the sampling parameters s.
//
// `log_rho_values` caches log rho_s, `weights` holds |rho_s|^(2 - 2 beta_rw)
// divided by a shared power of e. `multiplicity` is empty for Markov-chain
// batches (every sample counts once); enumeration batches store the
// normalized sampling probability of each pair there instead.
struct SampleBatch {
  int n_sites = 0;
  double beta_rw = 1.0;
  std::vector<ConfigurationPair> pairs;
  std::vector<Complex> log_rho_values;
  std::vector<double> weights;
  std::vector<double> multiplicity;
  double log_weight_shift = 0.0;
  int thinning = 1;
  double acceptance_rate = 1.0;

  std::size_t size() const { return pairs.size(); }
  double multiplicity_of(std::size_t i) const {
    return multiplicity.empty() ? 1.0 : multiplicity[i];
  }
};

// Diagonal configurations drawn from rho(s, s) / Tr rho.
struct DiagonalBatch {
  int n_sites = 0;
  std::vector<BasisState> configs;
  int thinning = 1;
  double acceptance_rate = 1.0;
};

// Two-move proposal that stays in the Delta S^z = 0 sector: swap two sites
// on one side, then flip sigma_k and sigma'_l together when they agree. The
// proposal probability is symmetric.
ConfigurationPair propose(ConfigurationPair x, int n_sites, Rng& rng);

// Metropolis test for |rho|^(2 beta_rw) given Re log rho at both pairs.
bool accept(double log_abs_old, double log_abs_new, double beta_rw, Rng& rng);
bool accept(ConfigurationPair x, ConfigurationPair x_new,
            const NdoEvaluator& eval, double beta_rw, Rng& rng);

SampleBatch sample_pairs(const NdoParameters& params,
                         const SamplerConfig& config);

// Every pair of `domain` with its exact sampling probability as
// multiplicity; estimators over this batch are full sums.
SampleBatch enumerate_batch(const NdoParameters& params, PairDomain domain,
                            double beta_rw = 1.0);

DiagonalBatch sample_diagonal(const NdoParameters& params,
                              const SamplerConfig& config);

// Debug dump, little-endian: magic "NESSBAT1", uint32 n_sites, uint32
// reserved, uint64 count, then per pair uint32 row, uint32 col, float64
// Re log rho, float64 Im log rho, float64 weight.
void dump_batch(const std::filesystem::path& path, const SampleBatch& batch);

}  // namespace ness
