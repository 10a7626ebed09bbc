#pragma once

#include <Eigen/Dense>
#include <functional>

#include "ness/model.hpp"

namespace ness {

// Largest chain the exact steady-state solver accepts.
inline constexpr int kMaxExactSites = 8;

// Dense 2^N x 2^N density matrix, rows and columns indexed by BasisState.
struct DensityMatrix {
  int n_sites = 0;
  Eigen::MatrixXcd matrix;

  // Throws NotADensityMatrix when Hermiticity or unit trace fail beyond tol.
  void check(double tol = 1e-8) const;
};

// Which configuration pairs a full enumeration visits. The Lindbladian never
// couples different Delta S^z sectors, so SectorZero is closed under rows.
enum class PairDomain { All, SectorZero };

std::vector<ConfigurationPair> enumerate_pairs(int n_sites, PairDomain domain);

using RhoProvider = std::function<Complex(ConfigurationPair)>;

// Full 4^N x 4^N superoperator acting on the row-major vectorization of rho.
// Only for N <= 5.
Eigen::MatrixXcd dense_lindbladian(const LindbladMap& map);

// (L rho) for a dense rho, evaluated from the sparse rows.
Eigen::MatrixXcd apply_lindbladian(const LindbladMap& map,
                                   const Eigen::MatrixXcd& rho);

// Steady state of the map, solved inside the Delta S^z = 0 sector. Throws
// TooLarge beyond kMaxExactSites and DegenerateNess when the null space is
// not one-dimensional.
DensityMatrix steady_state_ed(const LindbladMap& map);

// Tr sqrt(sqrt(rho) rho0 sqrt(rho)), clamped to [0, 1].
double fidelity(const DensityMatrix& rho, const DensityMatrix& rho0);

// ||L rho||^2 / ||rho||^2 with both sums taken over `domain`.
double exact_cost(const LindbladMap& map, const RhoProvider& rho,
                  PairDomain domain = PairDomain::All);

// Tr(O rho).
Complex exact_expectation(const DensityMatrix& rho, const SparseOperator& obs);

// Materializes rho over `domain` (zero elsewhere) and normalizes the trace.
DensityMatrix materialize_density(int n_sites, const RhoProvider& rho,
                                  PairDomain domain = PairDomain::SectorZero);

}  // namespace ness
