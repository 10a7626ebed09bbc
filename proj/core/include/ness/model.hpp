#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace ness {

using Complex = std::complex<double>;

// Spin configuration in the S^z product basis. Bit i is set when the spin on
// site i+1 points up (sigma = +1); site 1 is the least-significant bit, so the
// integer value is sum_i (sigma_i + 1)/2 * 2^(i-1).
using BasisState = std::uint32_t;

inline constexpr int kMaxSites = 24;

// Physical chain: XXZ couplings with open boundaries.
struct ChainSpec {
  int n_sites = 2;
  double coupling = 1.0;    // J
  double anisotropy = 1.0;  // Delta

  void validate() const;
  friend bool operator==(const ChainSpec&, const ChainSpec&) = default;
};

// Per-site pumping (sigma^+) and loss (sigma^-) rates.
struct DriveSpec {
  std::vector<double> gamma_plus;
  std::vector<double> gamma_minus;

  void validate(int n_sites) const;

  // Bulk rates gamma on both channels; boundary bias gamma^+_1 = (1+delta)
  // gamma^-_1 with gamma^-_1 = gamma, mirrored at site N.
  static DriveSpec model_a(int n_sites, double gamma, double delta);
  // A single pump on site 1 and a single loss on site N, both with rate gamma.
  static DriveSpec model_b(int n_sites, double gamma);

  friend bool operator==(const DriveSpec&, const DriveSpec&) = default;
};

inline int spin_at(BasisState s, int site) {
  return ((s >> site) & 1u) != 0u ? 1 : -1;
}

// Sum of sigma_i over the chain.
inline int total_sz(BasisState s, int n_sites) {
  return 2 * __builtin_popcount(s) - n_sites;
}

BasisState encode_spins(std::span<const int> spins);
std::vector<int> decode_spins(BasisState s, int n_sites);

struct ConfigurationPair {
  BasisState row = 0;
  BasisState col = 0;

  friend bool operator==(const ConfigurationPair&,
                         const ConfigurationPair&) = default;
};

// S^z(row) - S^z(col); even, independent of the chain length.
inline int delta_sz(ConfigurationPair x) {
  return 2 * (__builtin_popcount(x.row) - __builtin_popcount(x.col));
}

// Row-major vectorization index of rho(row, col): row * 2^N + col.
inline std::uint64_t pair_index(ConfigurationPair x, int n_sites) {
  return (static_cast<std::uint64_t>(x.row) << n_sites) | x.col;
}

inline ConfigurationPair pair_from_index(std::uint64_t index, int n_sites) {
  const std::uint64_t mask = (std::uint64_t{1} << n_sites) - 1;
  return {static_cast<BasisState>(index >> n_sites),
          static_cast<BasisState>(index & mask)};
}

struct PairHash {
  std::size_t operator()(ConfigurationPair x) const noexcept {
    const std::uint64_t k = (static_cast<std::uint64_t>(x.row) << 32) | x.col;
    return std::hash<std::uint64_t>{}(k * 0x9E3779B97F4A7C15ull);
  }
};

// All pairs (sigma, sigma') with Delta S^z = 0, ordered by pair index.
std::vector<ConfigurationPair> sector_zero_pairs(int n_sites);
// All 4^N pairs, ordered by pair index.
std::vector<ConfigurationPair> all_pairs(int n_sites);

// Operator on the 2^N-dimensional spin space stored row by row.
class SparseOperator {
 public:
  struct Entry {
    BasisState col;
    Complex value;
  };

  SparseOperator() = default;
  SparseOperator(int n_sites, std::vector<std::size_t> row_offsets,
                 std::vector<Entry> entries);

  int n_sites() const { return n_sites_; }
  std::size_t dimension() const { return std::size_t{1} << n_sites_; }
  std::size_t nonzeros() const { return entries_.size(); }

  std::span<const Entry> row(BasisState s) const {
    return {entries_.data() + row_offsets_[s],
            row_offsets_[s + 1] - row_offsets_[s]};
  }

  // Matrix element <row|O|col>; zero when not stored.
  Complex element(BasisState row, BasisState col) const;

  SparseOperator adjoint() const;

  // Builds an operator from a row generator. Duplicate columns are summed
  // and zero amplitudes dropped.
  template <class RowFn>
  static SparseOperator from_rows(int n_sites, RowFn&& fn);

 private:
  static SparseOperator assemble(int n_sites,
                                 std::vector<std::vector<Entry>>& rows);

  int n_sites_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<Entry> entries_;
};

template <class RowFn>
SparseOperator SparseOperator::from_rows(int n_sites, RowFn&& fn) {
  std::vector<std::vector<Entry>> rows(std::size_t{1} << n_sites);
  for (std::size_t s = 0; s < rows.size(); ++s)
    fn(static_cast<BasisState>(s), rows[s]);
  return assemble(n_sites, rows);
}

SparseOperator build_hamiltonian(const ChainSpec& chain);

// sqrt(gamma^-_i) sigma^-_i for i = 1..N followed by sqrt(gamma^+_i)
// sigma^+_i; channels with zero rate are omitted.
std::vector<SparseOperator> build_jump_operators(const ChainSpec& chain,
                                                 const DriveSpec& drive);

SparseOperator identity_op(int n_sites);
// sigma^z on a 1-based site.
SparseOperator magnetization_op(int n_sites, int site);
// sigma^+ / sigma^- on a 1-based site.
SparseOperator raising_op(int n_sites, int site);
SparseOperator lowering_op(int n_sites, int site);

struct LindbladEntry {
  ConfigurationPair pair;
  Complex value;
};

// Lindblad superoperator in configuration-pair space,
//   (L rho)(s, s') = sum_{t, t'} L_{s s', t t'} rho(t, t').
// Rows are generated from the chain and drive on demand: each row holds
// the diagonal term, at most 2(N-1) hopping terms and at most N jump terms.
// The object is immutable after construction, so concurrent row queries are
// safe.
class LindbladMap {
 public:
  LindbladMap(ChainSpec chain, DriveSpec drive);

  const ChainSpec& chain() const { return chain_; }
  const DriveSpec& drive() const { return drive_; }
  int n_sites() const { return chain_.n_sites; }

  // Nonzero entries of row x, appended to `out` after clearing it.
  void row(ConfigurationPair x, std::vector<LindbladEntry>& out) const;
  std::vector<LindbladEntry> row(ConfigurationPair x) const;

  std::size_t max_row_size() const;

 private:
  ChainSpec chain_;
  DriveSpec drive_;
  std::vector<double> down_loss_;  // 0.5 * gamma^+_i: decay of a down spin
  std::vector<double> up_loss_;    // 0.5 * gamma^-_i
};

LindbladMap build_lindblad_map(const ChainSpec& chain, const DriveSpec& drive);

inline std::vector<LindbladEntry> lindblad_row(const LindbladMap& map,
                                               ConfigurationPair x) {
  return map.row(x);
}

}  // namespace ness
