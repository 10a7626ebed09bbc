#include "ness/exact.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <cmath>
#include <fmt/format.h>

#include "ness/errors.hpp"

namespace ness {

namespace {

// Sector dimension up to which the null space is found by a dense SVD
// (N <= 6); larger sectors use a sparse LU solve with a trace constraint.
constexpr std::size_t kDenseSectorLimit = 1024;
constexpr double kNullSingularValue = 1e-8;

std::size_t dim_of(int n_sites) { return std::size_t{1} << n_sites; }

Eigen::MatrixXcd to_matrix(const Eigen::VectorXcd& v,
                           const std::vector<ConfigurationPair>& pairs,
                           int n_sites) {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim_of(n_sites), dim_of(n_sites));
  for (std::size_t i = 0; i < pairs.size(); ++i)
    rho(pairs[i].row, pairs[i].col) = v[static_cast<Eigen::Index>(i)];
  return rho;
}

DensityMatrix finalize(Eigen::MatrixXcd rho, int n_sites) {
  rho = (0.5 * (rho + rho.adjoint())).eval();
  const Complex tr = rho.trace();
  if (std::abs(tr) == 0.0)
    throw DegenerateNess("steady state has zero trace");
  rho /= tr.real();
  return {n_sites, std::move(rho)};
}

Eigen::VectorXcd null_vector_dense(const LindbladMap& map,
                                   const std::vector<ConfigurationPair>& pairs,
                                   const std::vector<std::int32_t>& lookup) {
  const int n = map.n_sites();
  const auto dim = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
  std::vector<LindbladEntry> row;
  for (Eigen::Index i = 0; i < dim; ++i) {
    map.row(pairs[i], row);
    for (const auto& e : row) a(i, lookup[pair_index(e.pair, n)]) += e.value;
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  Eigen::Index zeros = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] < kNullSingularValue) ++zeros;
  if (zeros > 1)
    throw DegenerateNess(
        fmt::format("Lindbladian null space has dimension {}", zeros));
  return svd.matrixV().col(dim - 1);
}

Eigen::VectorXcd null_vector_sparse(const LindbladMap& map,
                                    const std::vector<ConfigurationPair>& pairs,
                                    const std::vector<std::int32_t>& lookup) {
  const int n = map.n_sites();
  const auto dim = static_cast<Eigen::Index>(pairs.size());
  // The diagonal rows sum to zero (trace preservation), so one of them is
  // redundant and can carry the normalization Tr rho = 1 instead.
  Eigen::Index trace_row = -1;
  for (Eigen::Index i = 0; i < dim && trace_row < 0; ++i)
    if (pairs[i].row == pairs[i].col) trace_row = i;

  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(pairs.size() * map.max_row_size());
  std::vector<LindbladEntry> row;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (i == trace_row) continue;
    map.row(pairs[i], row);
    for (const auto& e : row)
      triplets.emplace_back(i, lookup[pair_index(e.pair, n)], e.value);
  }
  for (Eigen::Index i = 0; i < dim; ++i)
    if (pairs[i].row == pairs[i].col) triplets.emplace_back(trace_row, i, 1.0);

  Eigen::SparseMatrix<Complex> a(dim, dim);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<Complex>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw DegenerateNess("constrained Lindbladian is singular: " +
                         lu.lastErrorMessage());
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(dim);
  rhs[trace_row] = 1.0;
  Eigen::VectorXcd v = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !v.allFinite())
    throw DegenerateNess("sparse steady-state solve failed");
  return v;
}

Eigen::VectorXd clamped_eigenvalues(Eigen::VectorXd ev) {
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(ev[i], 0.0);
  return ev;
}

}  // namespace

void DensityMatrix::check(double tol) const {
  if (matrix.rows() != matrix.cols() ||
      static_cast<std::size_t>(matrix.rows()) != dim_of(n_sites))
    throw NotADensityMatrix("density matrix has wrong shape");
  const double herm = (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
  if (!(herm <= tol))
    throw NotADensityMatrix(
        fmt::format("density matrix is not Hermitian (deviation {:.3e})", herm));
  const Complex tr = matrix.trace();
  if (!(std::abs(tr - 1.0) <= tol))
    throw NotADensityMatrix(fmt::format(
        "density matrix trace is ({:.17g}, {:.17g})", tr.real(), tr.imag()));
}

std::vector<ConfigurationPair> enumerate_pairs(int n_sites, PairDomain domain) {
  return domain == PairDomain::All ? all_pairs(n_sites)
                                   : sector_zero_pairs(n_sites);
}

Eigen::MatrixXcd dense_lindbladian(const LindbladMap& map) {
  const int n = map.n_sites();
  if (n > 5) throw TooLarge("dense superoperator limited to N <= 5");
  const auto dim = static_cast<Eigen::Index>(dim_of(2 * n));
  Eigen::MatrixXcd l = Eigen::MatrixXcd::Zero(dim, dim);
  std::vector<LindbladEntry> row;
  for (Eigen::Index i = 0; i < dim; ++i) {
    map.row(pair_from_index(static_cast<std::uint64_t>(i), n), row);
    for (const auto& e : row)
      l(i, static_cast<Eigen::Index>(pair_index(e.pair, n))) += e.value;
  }
  return l;
}

Eigen::MatrixXcd apply_lindbladian(const LindbladMap& map,
                                   const Eigen::MatrixXcd& rho) {
  const int n = map.n_sites();
  const auto dim = static_cast<Eigen::Index>(dim_of(n));
  if (rho.rows() != dim || rho.cols() != dim)
    throw ConfigError("rho dimension does not match the map");
  Eigen::MatrixXcd out(dim, dim);
  std::vector<LindbladEntry> row;
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      map.row({static_cast<BasisState>(r), static_cast<BasisState>(c)}, row);
      Complex acc = 0.0;
      for (const auto& e : row) acc += e.value * rho(e.pair.row, e.pair.col);
      out(r, c) = acc;
    }
  }
  return out;
}

DensityMatrix steady_state_ed(const LindbladMap& map) {
  const int n = map.n_sites();
  if (n > kMaxExactSites)
    throw TooLarge(fmt::format("exact steady state limited to N <= {}, got {}",
                               kMaxExactSites, n));
  const auto pairs = sector_zero_pairs(n);
  std::vector<std::int32_t> lookup(dim_of(2 * n), -1);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    lookup[pair_index(pairs[i], n)] = static_cast<std::int32_t>(i);

  const Eigen::VectorXcd v = pairs.size() <= kDenseSectorLimit
                                 ? null_vector_dense(map, pairs, lookup)
                                 : null_vector_sparse(map, pairs, lookup);
  return finalize(to_matrix(v, pairs, n), n);
}

double fidelity(const DensityMatrix& rho, const DensityMatrix& rho0) {
  rho.check();
  rho0.check();
  if (rho.n_sites != rho0.n_sites)
    throw NotADensityMatrix("fidelity of matrices with different dimensions");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.matrix);
  const Eigen::VectorXd root = clamped_eigenvalues(es.eigenvalues()).cwiseSqrt();
  const Eigen::MatrixXcd sqrt_rho =
      es.eigenvectors() * root.asDiagonal() * es.eigenvectors().adjoint();
  Eigen::MatrixXcd m = sqrt_rho * rho0.matrix * sqrt_rho;
  m = (0.5 * (m + m.adjoint())).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> inner(m,
                                                        Eigen::EigenvaluesOnly);
  const double f = clamped_eigenvalues(inner.eigenvalues()).cwiseSqrt().sum();
  return std::clamp(f, 0.0, 1.0);
}

double exact_cost(const LindbladMap& map, const RhoProvider& rho,
                  PairDomain domain) {
  const int n = map.n_sites();
  if (n > 10) throw TooLarge("full enumeration limited to N <= 10");
  const auto pairs = enumerate_pairs(n, domain);
  // Rows of the chosen domain stay inside it, so caching rho on the domain
  // covers every connected pair.
  std::vector<Complex> cache(dim_of(2 * n));
  for (const auto& x : pairs) cache[pair_index(x, n)] = rho(x);

  double num = 0.0;
  double den = 0.0;
  std::vector<LindbladEntry> row;
  for (const auto& x : pairs) {
    map.row(x, row);
    Complex acc = 0.0;
    for (const auto& e : row) acc += e.value * cache[pair_index(e.pair, n)];
    num += std::norm(acc);
    den += std::norm(cache[pair_index(x, n)]);
  }
  if (den == 0.0) throw ZeroState("rho vanishes on every enumerated pair");
  return num / den;
}

Complex exact_expectation(const DensityMatrix& rho, const SparseOperator& obs) {
  if (obs.n_sites() != rho.n_sites)
    throw ConfigError("observable and density matrix dimensions differ");
  Complex acc = 0.0;
  for (std::size_t s = 0; s < obs.dimension(); ++s)
    for (const auto& e : obs.row(static_cast<BasisState>(s)))
      acc += e.value * rho.matrix(e.col, static_cast<Eigen::Index>(s));
  return acc;
}

DensityMatrix materialize_density(int n_sites, const RhoProvider& rho,
                                  PairDomain domain) {
  if (n_sites > kMaxExactSites + 2)
    throw TooLarge("materializing rho limited to N <= 10");
  const auto dim = static_cast<Eigen::Index>(dim_of(n_sites));
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
  for (const auto& x : enumerate_pairs(n_sites, domain))
    m(x.row, x.col) = rho(x);
  const Complex tr = m.trace();
  if (std::abs(tr) == 0.0) throw ZeroState("materialized rho has zero trace");
  m /= tr;
  return {n_sites, std::move(m)};
}

}  // namespace ness
