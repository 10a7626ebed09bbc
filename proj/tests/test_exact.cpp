#include <gtest/gtest.h>

#include <random>

#include "ness/errors.hpp"
#include "ness/estimator.hpp"
#include "ness/exact.hpp"
#include "ness/sampler.hpp"
#include "oracles.hpp"

using namespace ness;
using Eigen::MatrixXcd;

namespace {

DensityMatrix pure_state(int n, BasisState s) {
  DensityMatrix r{n, MatrixXcd::Zero(Eigen::Index{1} << n, Eigen::Index{1} << n)};
  r.matrix(s, s) = 1.0;
  return r;
}

DensityMatrix random_density(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const Eigen::Index d = Eigen::Index{1} << n;
  MatrixXcd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = Complex(g(rng), g(rng));
  MatrixXcd rho = a * a.adjoint();
  rho /= rho.trace();
  return {n, rho};
}

RhoProvider table(const DensityMatrix& rho) {
  return [&rho](ConfigurationPair x) { return rho.matrix(x.row, x.col); };
}

}  // namespace

TEST(SteadyState, SingleSiteDecay) {
  const LindbladMap map({1, 1.0, 1.0}, DriveSpec{{0.0}, {1.0}});
  const auto rho = steady_state_ed(map);
  EXPECT_NEAR(std::abs(rho.matrix(0, 0) - 1.0), 0.0, 1e-12);
  EXPECT_NEAR(rho.matrix.cwiseAbs().sum(), 1.0, 1e-12);
  EXPECT_NEAR(exact_expectation(rho, magnetization_op(1, 1)).real(), -1.0, 1e-12);
}

TEST(SteadyState, BalancedDrive) {
  const LindbladMap map({1, 1.0, 1.0}, DriveSpec{{0.3}, {0.3}});
  const auto rho = steady_state_ed(map);
  EXPECT_LT((rho.matrix - 0.5 * MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SteadyState, DensityInvariantsForPresets) {
  for (int n = 2; n <= 6; ++n) {
    for (const auto& d : {DriveSpec::model_a(n, 0.2, 0.05), DriveSpec::model_b(n, 0.2)}) {
      const LindbladMap map({n, 0.105, 1.0}, d);
      const auto rho = steady_state_ed(map);
      EXPECT_NO_THROW(rho.check(1e-10));
      EXPECT_LT((rho.matrix - rho.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(rho.matrix.trace().real(), 1.0, 1e-10);
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(rho.matrix);
      EXPECT_GT(es.eigenvalues().minCoeff(), -1e-10);
      EXPECT_LT(apply_lindbladian(map, rho.matrix).norm(), 1e-10);
      EXPECT_LT(exact_cost(map, table(rho)), 1e-16);
    }
  }
}

TEST(SteadyState, ModelBIsNearlyReal) {
  const LindbladMap map({6, 1.0, 1.0}, DriveSpec::model_b(6, 0.2));
  const auto rho = steady_state_ed(map);
  const double diag = rho.matrix.diagonal().real().cwiseAbs().maxCoeff();
  const double imag = rho.matrix.imag().cwiseAbs().maxCoeff();
  EXPECT_GT(imag, 0.0);
  // about one decade below the diagonal at J = 1, gamma = 0.2
  EXPECT_LT(imag, 0.2 * diag);
  EXPECT_LT(rho.matrix.imag().diagonal().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SteadyState, Errors) {
  EXPECT_THROW(steady_state_ed(LindbladMap({9, 1.0, 1.0}, DriveSpec::model_b(9, 0.2))), TooLarge);
  // Decoupled second site without dissipation keeps any state it starts in.
  EXPECT_THROW(steady_state_ed(LindbladMap({2, 0.0, 1.0}, DriveSpec{{0, 0}, {1, 0}})),
               DegenerateNess);
}

TEST(SteadyState, DenseAndSparsePathsAgree) {
  const LindbladMap map({4, 0.105, 1.0}, DriveSpec::model_a(4, 0.2, 0.05));
  const auto rho = steady_state_ed(map);
  Eigen::JacobiSVD<MatrixXcd> svd(oracle::superoperator(map.chain(), map.drive()),
                                  Eigen::ComputeFullV);
  const Eigen::VectorXcd v = svd.matrixV().col(svd.matrixV().cols() - 1);
  MatrixXcd ref(16, 16);
  for (Eigen::Index r = 0; r < 16; ++r)
    for (Eigen::Index c = 0; c < 16; ++c) ref(r, c) = v(r * 16 + c);
  ref /= ref.trace();
  EXPECT_LT((rho.matrix - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Fidelity, Examples) {
  const auto up = pure_state(1, 1), down = pure_state(1, 0);
  EXPECT_NEAR(fidelity(up, up), 1.0, 1e-12);
  EXPECT_NEAR(fidelity(up, down), 0.0, 1e-12);
  const DensityMatrix mixed{1, 0.5 * MatrixXcd::Identity(2, 2)};
  EXPECT_NEAR(fidelity(mixed, up), 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(Fidelity, SymmetricOnRandomPairs) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = random_density(3, 2 * s), b = random_density(3, 2 * s + 1);
    const double f = fidelity(a, b);
    EXPECT_NEAR(f, fidelity(b, a), 1e-10);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_NEAR(fidelity(a, a), 1.0, 1e-10);
  }
}

TEST(Fidelity, RejectsNonDensity) {
  const auto up = pure_state(1, 1);
  DensityMatrix bad{1, 2.0 * MatrixXcd::Identity(2, 2)};
  EXPECT_THROW(fidelity(bad, up), NotADensityMatrix);
  DensityMatrix skew = up;
  skew.matrix(0, 1) = 0.3;
  EXPECT_THROW(fidelity(skew, up), NotADensityMatrix);
}

TEST(ExactCost, IdentityUnderDecay) {
  const LindbladMap map({1, 1.0, 1.0}, DriveSpec{{0.0}, {1.0}});
  const RhoProvider one = [](ConfigurationPair x) { return Complex(x.row == x.col ? 1.0 : 0.0); };
  EXPECT_NEAR(exact_cost(map, one), 1.0, 1e-15);
}

TEST(ExactCost, ZeroState) {
  const LindbladMap map({2, 1.0, 1.0}, DriveSpec::model_b(2, 0.2));
  EXPECT_THROW(exact_cost(map, [](ConfigurationPair) { return Complex(0.0); }), ZeroState);
}

TEST(ExactCost, MatchesLocalCostSum) {
  const LindbladMap map({4, 0.105, 1.0}, DriveSpec::model_b(4, 0.2));
  const auto params = init_params(4, 1, 1, 5, 0.3);
  const NdoEvaluator eval(params);
  const RhoProvider rho = [&eval](ConfigurationPair x) { return std::exp(eval.log_rho(x)); };
  double num = 0.0, den = 0.0;
  for (const auto x : sector_zero_pairs(4)) {
    const double p = std::norm(rho(x));
    num += p * local_cost(params, map, x);
    den += p;
  }
  EXPECT_NEAR(num / den, exact_cost(map, rho, PairDomain::SectorZero), 1e-12 * num / den);
}

TEST(Expectation, IdentityAndMagnetization) {
  const auto rho = random_density(3, 99);
  EXPECT_NEAR(std::abs(exact_expectation(rho, identity_op(3)) - 1.0), 0.0, 1e-12);
  for (int i = 1; i <= 3; ++i) {
    const Complex v = exact_expectation(rho, magnetization_op(3, i));
    const Complex ref = (oracle::at_site(oracle::sigma_z(), i, 3) * rho.matrix).trace();
    EXPECT_NEAR(std::abs(v - ref), 0.0, 1e-12);
    EXPECT_NEAR(v.imag(), 0.0, 1e-10);
  }
}

TEST(Materialize, NormalizesTrace) {
  const auto rho = materialize_density(2, [](ConfigurationPair) { return Complex(3.0); },
                                       PairDomain::All);
  EXPECT_NEAR(rho.matrix.trace().real(), 1.0, 1e-15);
  EXPECT_NEAR(rho.matrix(0, 3).real(), 0.25, 1e-15);
  const auto sector = materialize_density(2, [](ConfigurationPair) { return Complex(3.0); });
  EXPECT_EQ(sector.matrix(0, 3), Complex(0.0));
  EXPECT_NEAR(sector.matrix(1, 2).real(), 0.25, 1e-15);
}
