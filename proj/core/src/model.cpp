#include "ness/model.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "ness/errors.hpp"

namespace ness {

void ChainSpec::validate() const {
  // A single site has no bonds but is still a valid dissipative system.
  if (n_sites < 1 || n_sites > kMaxSites)
    throw ConfigError(fmt::format("n_sites must be in [1, {}], got {}",
                                  kMaxSites, n_sites));
  if (!std::isfinite(coupling) || !std::isfinite(anisotropy))
    throw ConfigError("coupling and anisotropy must be finite");
}

void DriveSpec::validate(int n_sites) const {
  if (gamma_plus.size() != static_cast<std::size_t>(n_sites) ||
      gamma_minus.size() != static_cast<std::size_t>(n_sites))
    throw ConfigError(fmt::format(
        "drive rates must have length {} (got {} and {})", n_sites,
        gamma_plus.size(), gamma_minus.size()));
  bool any_positive = false;
  for (const auto* rates : {&gamma_plus, &gamma_minus}) {
    for (double g : *rates) {
      if (!std::isfinite(g) || g < 0.0)
        throw ConfigError("drive rates must be finite and nonnegative");
      any_positive = any_positive || g > 0.0;
    }
  }
  if (!any_positive)
    throw ConfigError("at least one drive rate must be positive");
}

DriveSpec DriveSpec::model_a(int n_sites, double gamma, double delta) {
  if (n_sites < 2) throw ConfigError("model A needs at least two sites");
  DriveSpec d;
  d.gamma_plus.assign(n_sites, gamma);
  d.gamma_minus.assign(n_sites, gamma);
  d.gamma_minus.front() = gamma;
  d.gamma_plus.front() = (1.0 + delta) * gamma;
  d.gamma_plus.back() = d.gamma_minus.front();
  d.gamma_minus.back() = d.gamma_plus.front();
  return d;
}

DriveSpec DriveSpec::model_b(int n_sites, double gamma) {
  if (n_sites < 2) throw ConfigError("model B needs at least two sites");
  DriveSpec d;
  d.gamma_plus.assign(n_sites, 0.0);
  d.gamma_minus.assign(n_sites, 0.0);
  d.gamma_plus.front() = gamma;
  d.gamma_minus.back() = gamma;
  return d;
}

BasisState encode_spins(std::span<const int> spins) {
  if (spins.empty() || spins.size() > static_cast<std::size_t>(kMaxSites))
    throw ConfigError("spin configuration has invalid length");
  BasisState s = 0;
  for (std::size_t i = 0; i < spins.size(); ++i) {
    if (spins[i] == 1)
      s |= BasisState{1} << i;
    else if (spins[i] != -1)
      throw ConfigError("spin values must be exactly +1 or -1");
  }
  return s;
}

std::vector<int> decode_spins(BasisState s, int n_sites) {
  std::vector<int> spins(n_sites);
  for (int i = 0; i < n_sites; ++i) spins[i] = spin_at(s, i);
  return spins;
}

std::vector<ConfigurationPair> sector_zero_pairs(int n_sites) {
  const BasisState dim = BasisState{1} << n_sites;
  std::vector<ConfigurationPair> pairs;
  for (BasisState r = 0; r < dim; ++r)
    for (BasisState c = 0; c < dim; ++c)
      if (__builtin_popcount(r) == __builtin_popcount(c))
        pairs.push_back({r, c});
  return pairs;
}

std::vector<ConfigurationPair> all_pairs(int n_sites) {
  const BasisState dim = BasisState{1} << n_sites;
  std::vector<ConfigurationPair> pairs;
  pairs.reserve(std::size_t{dim} * dim);
  for (BasisState r = 0; r < dim; ++r)
    for (BasisState c = 0; c < dim; ++c) pairs.push_back({r, c});
  return pairs;
}

// ---------------------------------------------------------------------------
// SparseOperator

SparseOperator::SparseOperator(int n_sites, std::vector<std::size_t> offsets,
                               std::vector<Entry> entries)
    : n_sites_(n_sites),
      row_offsets_(std::move(offsets)),
      entries_(std::move(entries)) {
  if (row_offsets_.size() != dimension() + 1 ||
      row_offsets_.back() != entries_.size())
    throw ConfigError("inconsistent sparse operator layout");
}

SparseOperator SparseOperator::assemble(int n_sites,
                                        std::vector<std::vector<Entry>>& rows) {
  std::vector<std::size_t> offsets{0};
  offsets.reserve(rows.size() + 1);
  std::vector<Entry> entries;
  for (auto& r : rows) {
    std::sort(r.begin(), r.end(),
              [](const Entry& a, const Entry& b) { return a.col < b.col; });
    std::size_t begin = entries.size();
    for (const Entry& e : r) {
      if (entries.size() > begin && entries.back().col == e.col)
        entries.back().value += e.value;
      else
        entries.push_back(e);
    }
    auto tail = std::remove_if(entries.begin() + begin, entries.end(),
                               [](const Entry& e) { return e.value == 0.0; });
    entries.erase(tail, entries.end());
    offsets.push_back(entries.size());
  }
  return SparseOperator(n_sites, std::move(offsets), std::move(entries));
}

Complex SparseOperator::element(BasisState row, BasisState col) const {
  for (const Entry& e : this->row(row))
    if (e.col == col) return e.value;
  return 0.0;
}

SparseOperator SparseOperator::adjoint() const {
  std::vector<std::vector<Entry>> rows(dimension());
  for (std::size_t s = 0; s < dimension(); ++s)
    for (const Entry& e : row(static_cast<BasisState>(s)))
      rows[e.col].push_back({static_cast<BasisState>(s), std::conj(e.value)});
  return assemble(n_sites_, rows);
}

// ---------------------------------------------------------------------------
// Operators

namespace {

double bond_energy(BasisState s, const ChainSpec& chain) {
  int zz = 0;
  for (int k = 0; k + 1 < chain.n_sites; ++k)
    zz += spin_at(s, k) * spin_at(s, k + 1);
  return chain.coupling * chain.anisotropy * zz;
}

bool antiparallel(BasisState s, int k) {
  return (((s >> k) ^ (s >> (k + 1))) & 1u) != 0u;
}

BasisState flip_bond(BasisState s, int k) { return s ^ (BasisState{3} << k); }

void check_site(int n_sites, int site) {
  if (site < 1 || site > n_sites)
    throw ConfigError(fmt::format("site {} outside [1, {}]", site, n_sites));
}

}  // namespace

SparseOperator build_hamiltonian(const ChainSpec& chain) {
  chain.validate();
  return SparseOperator::from_rows(
      chain.n_sites, [&](BasisState s, std::vector<SparseOperator::Entry>& r) {
        r.push_back({s, bond_energy(s, chain)});
        // sigma^x sigma^x + sigma^y sigma^y = 2 (sigma^+ sigma^- + h.c.)
        for (int k = 0; k + 1 < chain.n_sites; ++k)
          if (antiparallel(s, k))
            r.push_back({flip_bond(s, k), 2.0 * chain.coupling});
      });
}

SparseOperator identity_op(int n_sites) {
  return SparseOperator::from_rows(
      n_sites, [](BasisState s, auto& r) { r.push_back({s, 1.0}); });
}

SparseOperator magnetization_op(int n_sites, int site) {
  check_site(n_sites, site);
  return SparseOperator::from_rows(n_sites, [&](BasisState s, auto& r) {
    r.push_back({s, static_cast<double>(spin_at(s, site - 1))});
  });
}

SparseOperator raising_op(int n_sites, int site) {
  check_site(n_sites, site);
  const BasisState bit = BasisState{1} << (site - 1);
  // <s|sigma^+|t> = 1 for s = t with the site raised.
  return SparseOperator::from_rows(n_sites, [&](BasisState s, auto& r) {
    if (s & bit) r.push_back({s ^ bit, 1.0});
  });
}

SparseOperator lowering_op(int n_sites, int site) {
  check_site(n_sites, site);
  const BasisState bit = BasisState{1} << (site - 1);
  return SparseOperator::from_rows(n_sites, [&](BasisState s, auto& r) {
    if (!(s & bit)) r.push_back({s ^ bit, 1.0});
  });
}

std::vector<SparseOperator> build_jump_operators(const ChainSpec& chain,
                                                 const DriveSpec& drive) {
  chain.validate();
  drive.validate(chain.n_sites);
  const int n = chain.n_sites;
  auto scaled = [n](SparseOperator op, double rate) {
    const double amp = std::sqrt(rate);
    return SparseOperator::from_rows(n, [&](BasisState s, auto& r) {
      for (const auto& e : op.row(s)) r.push_back({e.col, amp * e.value});
    });
  };
  std::vector<SparseOperator> jumps;
  for (int i = 1; i <= n; ++i)
    if (drive.gamma_minus[i - 1] > 0.0)
      jumps.push_back(scaled(lowering_op(n, i), drive.gamma_minus[i - 1]));
  for (int i = 1; i <= n; ++i)
    if (drive.gamma_plus[i - 1] > 0.0)
      jumps.push_back(scaled(raising_op(n, i), drive.gamma_plus[i - 1]));
  return jumps;
}

// ---------------------------------------------------------------------------
// LindbladMap

LindbladMap::LindbladMap(ChainSpec chain, DriveSpec drive)
    : chain_(std::move(chain)), drive_(std::move(drive)) {
  chain_.validate();
  drive_.validate(chain_.n_sites);
  down_loss_.resize(chain_.n_sites);
  up_loss_.resize(chain_.n_sites);
  for (int i = 0; i < chain_.n_sites; ++i) {
    down_loss_[i] = 0.5 * drive_.gamma_plus[i];
    up_loss_[i] = 0.5 * drive_.gamma_minus[i];
  }
}

LindbladMap build_lindblad_map(const ChainSpec& chain, const DriveSpec& drive) {
  return LindbladMap(chain, drive);
}

std::size_t LindbladMap::max_row_size() const {
  return 1 + 2 * static_cast<std::size_t>(std::max(chain_.n_sites - 1, 0)) +
         static_cast<std::size_t>(chain_.n_sites);
}

void LindbladMap::row(ConfigurationPair x,
                      std::vector<LindbladEntry>& out) const {
  out.clear();
  const int n = chain_.n_sites;
  const double two_j = 2.0 * chain_.coupling;

  // -i H rho + i rho H and the anticommutator -1/2 {L^dag L, rho}; both
  // L^dag L are diagonal projectors for single-site raising and lowering.
  double decay = 0.0;
  for (int i = 0; i < n; ++i) {
    const bool up_r = (x.row >> i) & 1u;
    const bool up_c = (x.col >> i) & 1u;
    decay += up_r ? up_loss_[i] : down_loss_[i];
    decay += up_c ? up_loss_[i] : down_loss_[i];
  }
  const double energy_diff =
      bond_energy(x.row, chain_) - bond_energy(x.col, chain_);
  const Complex diag{-decay, -energy_diff};
  if (diag != 0.0) out.push_back({x, diag});

  if (chain_.coupling != 0.0) {
    for (int k = 0; k + 1 < n; ++k) {
      if (antiparallel(x.row, k))
        out.push_back({{flip_bond(x.row, k), x.col}, Complex{0.0, -two_j}});
      if (antiparallel(x.col, k))
        out.push_back({{x.row, flip_bond(x.col, k)}, Complex{0.0, two_j}});
    }
  }

  // Jump terms L rho L^dag: both sides must share the spin that the jump
  // creates, and the connected pair has it flipped back on both sides.
  for (int i = 0; i < n; ++i) {
    const BasisState bit = BasisState{1} << i;
    const bool up_r = x.row & bit;
    const bool up_c = x.col & bit;
    if (up_r != up_c) continue;
    const double rate = up_r ? drive_.gamma_plus[i] : drive_.gamma_minus[i];
    if (rate > 0.0) out.push_back({{x.row ^ bit, x.col ^ bit}, rate});
  }
}

std::vector<LindbladEntry> LindbladMap::row(ConfigurationPair x) const {
  std::vector<LindbladEntry> out;
  out.reserve(max_row_size());
  row(x, out);
  return out;
}

}  // namespace ness
