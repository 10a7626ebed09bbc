#pragma once

#include <vector>

#include "ness/exact.hpp"
#include "ness/model.hpp"
#include "ness/ndo.hpp"
#include "ness/sampler.hpp"

namespace ness {

struct ObservableEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  double imag_residual = 0.0;  // |Im| of the mean, zero for exact Hermitian input
};

// Mean over diagonal samples s of sum_s' O(s, s') rho(s', s) / rho(s, s),
// with rho restricted to the Delta S^z = 0 sector. The error bar comes from
// batch means over blocks of `block_size` samples (default 10 x thinning).
ObservableEstimate estimate_observable(const NdoParameters& params,
                                       const SparseOperator& obs,
                                       const DiagonalBatch& batch,
                                       int block_size = 0);

// i (sigma^+_j sigma^-_k - sigma^-_j sigma^+_k) on 1-based sites, without
// the coupling prefactor.
SparseOperator spin_current_op(int n_sites, int j, int k);
inline SparseOperator spin_current_op(const ChainSpec& chain, int j, int k) {
  return spin_current_op(chain.n_sites, j, k);
}

// Average of the nearest-neighbour bond currents on one shared batch. The
// error bar is taken from the per-sample average over bonds.
ObservableEstimate mean_current(const NdoParameters& params,
                                const ChainSpec& chain,
                                const DiagonalBatch& batch, int block_size = 0);

// Real part of Tr(O rho).
double exact_observable(const DensityMatrix& rho, const SparseOperator& obs);
// Nearest-neighbour currents I_{k,k+1}, k = 1..N-1.
std::vector<double> exact_bond_currents(const DensityMatrix& rho);
double exact_mean_current(const DensityMatrix& rho);
// <sigma^z_i> for i = 1..N.
std::vector<double> exact_magnetizations(const DensityMatrix& rho);

// Trace-normalized rho of the network restricted to Delta S^z = 0.
DensityMatrix network_density(const NdoParameters& params);

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<int> counts;
};

struct FitResult {
  double limit = 0.0;      // I*
  double amplitude = 0.0;  // C
  double rate = 0.5;       // lambda
  double residual_rms = 0.0;
  double limit_error = 0.0;
  double amplitude_error = 0.0;
  double rate_error = 0.0;
  bool degenerate = false;  // constant series, lambda is a placeholder
  std::vector<double> residuals;
  Histogram residual_histogram;
};

// Least-squares fit of v(t) = I* + C lambda^t. Lambda is seeded on a grid
// with 1 - lambda log-spaced, (I*, C) solved linearly for every seed, and the
// best seed refined by Levenberg-Marquardt. Needs at least 10 points.
FitResult fit_exponential(const std::vector<double>& t,
                          const std::vector<double>& v);

struct NormalityTest {
  double w = 0.0;
  double p_value = 0.0;
};

// Shapiro-Wilk W test with Royston's approximation, 3 <= n <= 5000.
NormalityTest shapiro_wilk(std::vector<double> x);

}  // namespace ness
