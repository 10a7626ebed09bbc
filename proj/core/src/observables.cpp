#include "ness/observables.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numeric>
#include <spdlog/spdlog.h>

#include "ness/errors.hpp"

namespace ness {

namespace {

// Mean and batch-means standard error of a per-sample series.
void block_statistics(const std::vector<double>& series, int block_size,
                      double& mean, double& std_error) {
  const std::size_t n = series.size();
  mean = std::accumulate(series.begin(), series.end(), 0.0) /
         static_cast<double>(n);
  const std::size_t b = std::max<std::size_t>(1, static_cast<std::size_t>(block_size));
  std::size_t n_blocks = n / b;
  std::vector<double> blocks;
  if (n_blocks >= 2) {
    for (std::size_t k = 0; k < n_blocks; ++k) {
      double s = 0.0;
      for (std::size_t i = k * b; i < (k + 1) * b; ++i) s += series[i];
      blocks.push_back(s / static_cast<double>(b));
    }
  } else {
    blocks = series;  // too short to block
  }
  if (blocks.size() < 2) {
    std_error = 0.0;
    return;
  }
  const double bm = std::accumulate(blocks.begin(), blocks.end(), 0.0) /
                    static_cast<double>(blocks.size());
  double var = 0.0;
  for (double x : blocks) var += (x - bm) * (x - bm);
  var /= static_cast<double>(blocks.size() - 1);
  std_error = std::sqrt(var / static_cast<double>(blocks.size()));
}

std::vector<Complex> local_observable(const NdoEvaluator& eval,
                                      const SparseOperator& obs,
                                      const DiagonalBatch& batch) {
  std::vector<Complex> out;
  out.reserve(batch.configs.size());
  for (BasisState s : batch.configs) {
    const Complex diag = eval.log_rho({s, s});
    Complex acc = 0.0;
    for (const auto& e : obs.row(s)) {
      const ConfigurationPair x{e.col, s};
      if (delta_sz(x) != 0) continue;
      acc += e.value * std::exp(eval.log_rho(x) - diag);
    }
    out.push_back(acc);
  }
  return out;
}

ObservableEstimate summarize(const std::vector<Complex>& local,
                             const DiagonalBatch& batch, int block_size) {
  ObservableEstimate est;
  est.n_samples = local.size();
  std::vector<double> re(local.size());
  Complex sum = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) {
    re[i] = local[i].real();
    sum += local[i];
  }
  const int b = block_size > 0 ? block_size : 10 * std::max(1, batch.thinning);
  block_statistics(re, b, est.value, est.std_error);
  est.imag_residual = std::abs(sum.imag()) / static_cast<double>(local.size());
  if (est.imag_residual > 1e-6)
    spdlog::debug("observable has imaginary residual {:.3g}", est.imag_residual);
  return est;
}

}  // namespace

ObservableEstimate estimate_observable(const NdoParameters& params,
                                       const SparseOperator& obs,
                                       const DiagonalBatch& batch,
                                       int block_size) {
  if (batch.configs.empty()) throw ConfigError("empty diagonal batch");
  if (obs.n_sites() != params.shape().n_sites)
    throw ConfigError("observable and network have different chain lengths");
  const NdoEvaluator eval(params, false);
  return summarize(local_observable(eval, obs, batch), batch, block_size);
}

SparseOperator spin_current_op(int n_sites, int j, int k) {
  if (j < 1 || j > n_sites || k < 1 || k > n_sites || j == k)
    throw ConfigError("current sites must be distinct and lie in 1..N");
  const BasisState bj = BasisState{1} << (j - 1);
  const BasisState bk = BasisState{1} << (k - 1);
  return SparseOperator::from_rows(
      n_sites, [&](BasisState r, std::vector<SparseOperator::Entry>& row) {
        const bool up_j = r & bj;
        const bool up_k = r & bk;
        if (up_j == up_k) return;
        // sigma^+_j sigma^-_k lands in rows with j up and k down.
        row.push_back({r ^ bj ^ bk, up_j ? Complex(0.0, 1.0) : Complex(0.0, -1.0)});
      });
}

ObservableEstimate mean_current(const NdoParameters& params,
                                const ChainSpec& chain,
                                const DiagonalBatch& batch, int block_size) {
  const int n = chain.n_sites;
  if (n < 2) throw ConfigError("mean current needs at least two sites");
  if (batch.configs.empty()) throw ConfigError("empty diagonal batch");
  const NdoEvaluator eval(params, false);
  std::vector<Complex> avg(batch.configs.size(), 0.0);
  for (int k = 1; k < n; ++k) {
    const auto local = local_observable(eval, spin_current_op(n, k, k + 1), batch);
    for (std::size_t i = 0; i < avg.size(); ++i)
      avg[i] += local[i] / static_cast<double>(n - 1);
  }
  return summarize(avg, batch, block_size);
}

double exact_observable(const DensityMatrix& rho, const SparseOperator& obs) {
  return exact_expectation(rho, obs).real();
}

std::vector<double> exact_bond_currents(const DensityMatrix& rho) {
  std::vector<double> out;
  for (int k = 1; k < rho.n_sites; ++k)
    out.push_back(exact_observable(rho, spin_current_op(rho.n_sites, k, k + 1)));
  return out;
}

double exact_mean_current(const DensityMatrix& rho) {
  const auto bonds = exact_bond_currents(rho);
  if (bonds.empty()) throw ConfigError("mean current needs at least two sites");
  return std::accumulate(bonds.begin(), bonds.end(), 0.0) /
         static_cast<double>(bonds.size());
}

std::vector<double> exact_magnetizations(const DensityMatrix& rho) {
  std::vector<double> out;
  for (int i = 1; i <= rho.n_sites; ++i)
    out.push_back(exact_observable(rho, magnetization_op(rho.n_sites, i)));
  return out;
}

DensityMatrix network_density(const NdoParameters& params) {
  const NdoEvaluator eval(params, false);
  return materialize_density(
      params.shape().n_sites,
      [&eval](ConfigurationPair x) { return std::exp(eval.log_rho(x)); },
      PairDomain::SectorZero);
}

// ---------------------------------------------------------------------------
// Exponential extrapolation

namespace {

struct LinearFit {
  double limit = 0.0;
  double amplitude = 0.0;
  double rss = std::numeric_limits<double>::infinity();
};

LinearFit solve_linear(const std::vector<double>& t, const std::vector<double>& v,
                       double lambda) {
  const Eigen::Index n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = std::pow(lambda, t[i]);
    b(i) = v[i];
  }
  LinearFit fit;
  const Eigen::Vector2d sol = a.colPivHouseholderQr().solve(b);
  if (!sol.allFinite()) return fit;
  fit.limit = sol(0);
  fit.amplitude = sol(1);
  fit.rss = (a * sol - b).squaredNorm();
  return fit;
}

double model_rss(const std::vector<double>& t, const std::vector<double>& v,
                 const Eigen::Vector3d& p) {
  double rss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = p(0) + p(1) * std::pow(p(2), t[i]) - v[i];
    rss += r * r;
  }
  return rss;
}

Eigen::MatrixXd jacobian(const std::vector<double>& t, const Eigen::Vector3d& p) {
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(t.size()), 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double pw = std::pow(p(2), t[i]);
    jac(i, 0) = 1.0;
    jac(i, 1) = pw;
    jac(i, 2) = t[i] == 0.0 ? 0.0 : p(1) * t[i] * pw / p(2);
  }
  return jac;
}

}  // namespace

FitResult fit_exponential(const std::vector<double>& t,
                          const std::vector<double>& v) {
  if (t.size() != v.size()) throw ConfigError("fit series lengths differ");
  if (t.size() < 10) throw ConfigError("exponential fit needs at least 10 points");
  const std::size_t n = t.size();
  FitResult out;

  const auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
  const double scale = std::max(std::abs(*vmin), std::abs(*vmax));
  if (*vmax - *vmin <= 1e-14 * std::max(scale, 1e-300)) {
    out.limit = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    out.amplitude = 0.0;
    out.rate = 0.5;
    out.degenerate = true;
    out.residuals.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out.residuals[i] = v[i] - out.limit;
  } else {
    // Seed grid: 1 - lambda from 1e-7 to 0.999, log-spaced.
    const int grid = 400;
    LinearFit best;
    double best_lambda = 0.5;
    for (int g = 0; g < grid; ++g) {
      const double e = -7.0 + (std::log10(0.999) + 7.0) * g / (grid - 1);
      const double lambda = 1.0 - std::pow(10.0, e);
      const LinearFit f = solve_linear(t, v, lambda);
      if (f.rss < best.rss) {
        best = f;
        best_lambda = lambda;
      }
    }
    if (!std::isfinite(best.rss)) throw FitDiverged("no seed gave a finite fit");

    Eigen::Vector3d p(best.limit, best.amplitude, best_lambda);
    double rss = model_rss(t, v, p);
    double mu = 1e-3;
    for (int it = 0; it < 500; ++it) {
      const Eigen::MatrixXd jac = jacobian(t, p);
      Eigen::VectorXd r(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        r(i) = p(0) + p(1) * std::pow(p(2), t[i]) - v[i];
      const Eigen::Matrix3d jtj = jac.transpose() * jac;
      const Eigen::Vector3d jtr = jac.transpose() * r;
      bool improved = false;
      for (int tries = 0; tries < 60 && !improved; ++tries) {
        Eigen::Matrix3d a = jtj;
        a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-300);
        const Eigen::Vector3d step = a.ldlt().solve(-jtr);
        Eigen::Vector3d trial = p + step;
        if (step.allFinite() && trial(2) > 0.0 && trial(2) < 1.0) {
          const double trial_rss = model_rss(t, v, trial);
          if (std::isfinite(trial_rss) && trial_rss <= rss) {
            const double gain = rss - trial_rss;
            p = trial;
            rss = trial_rss;
            mu = std::max(mu / 3.0, 1e-12);
            improved = true;
            if (gain <= 1e-15 * std::max(rss, 1e-300) &&
                step.norm() <= 1e-14 * (1.0 + p.norm()))
              it = 500;
            break;
          }
        }
        mu *= 4.0;
      }
      if (!improved) break;
    }
    if (!p.allFinite()) throw FitDiverged("refinement produced non-finite parameters");

    out.limit = p(0);
    out.amplitude = p(1);
    out.rate = p(2);
    out.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      out.residuals[i] = v[i] - (p(0) + p(1) * std::pow(p(2), t[i]));
    if (n > 3) {
      const double sigma2 = rss / static_cast<double>(n - 3);
      const Eigen::MatrixXd jac = jacobian(t, p);
      const Eigen::Matrix3d cov =
          (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse() *
          sigma2;
      out.limit_error = std::sqrt(std::max(0.0, cov(0, 0)));
      out.amplitude_error = std::sqrt(std::max(0.0, cov(1, 1)));
      out.rate_error = std::sqrt(std::max(0.0, cov(2, 2)));
    }
  }

  double ss = 0.0;
  for (double r : out.residuals) ss += r * r;
  out.residual_rms = std::sqrt(ss / static_cast<double>(n));

  const int bins = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
  const auto [rmin, rmax] = std::minmax_element(out.residuals.begin(), out.residuals.end());
  const double lo = *rmin;
  const double width = (*rmax - *rmin) > 0.0 ? (*rmax - *rmin) / bins : 1.0;
  out.residual_histogram.counts.assign(bins, 0);
  for (int b = 0; b <= bins; ++b) out.residual_histogram.edges.push_back(lo + b * width);
  for (double r : out.residuals) {
    const int b = std::min(bins - 1, static_cast<int>((r - lo) / width));
    ++out.residual_histogram.counts[b];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normality check

namespace {

double poly(const double* c, int n, double x) {
  double r = c[n - 1];
  for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
  return r;
}

}  // namespace

NormalityTest shapiro_wilk(std::vector<double> x) {
  const std::size_t n = x.size();
  if (n < 3 || n > 5000) throw ConfigError("Shapiro-Wilk needs 3 <= n <= 5000");
  std::sort(x.begin(), x.end());
  const double range = x.back() - x.front();
  if (!(range > 0.0)) throw ConfigError("Shapiro-Wilk needs non-constant data");

  const boost::math::normal_distribution<double> normal;
  const double nn = static_cast<double>(n);
  std::vector<double> a(n);
  if (n == 3) {
    a = {-std::sqrt(0.5), 0.0, std::sqrt(0.5)};
  } else {
    std::vector<double> m(n);
    double summ2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = boost::math::quantile(normal, (static_cast<double>(i + 1) - 0.375) /
                                               (nn + 0.25));
      summ2 += m[i] * m[i];
    }
    const double ssumm2 = std::sqrt(summ2);
    const double u = 1.0 / std::sqrt(nn);
    static constexpr double c1[] = {0.0, 0.221157, -0.147981, -2.071190,
                                    4.434685, -2.706056};
    static constexpr double c2[] = {0.0, 0.042981, -0.293762, -1.752461,
                                    5.682633, -3.582633};
    const double an = m[n - 1] / ssumm2 + poly(c1, 6, u);
    double phi;
    if (n > 5) {
      const double an1 = m[n - 2] / ssumm2 + poly(c2, 6, u);
      phi = (summ2 - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
            (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
      for (std::size_t i = 2; i < n - 2; ++i) a[i] = m[i] / std::sqrt(phi);
      a[n - 2] = an1;
      a[1] = -an1;
    } else {
      phi = (summ2 - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
      for (std::size_t i = 1; i < n - 1; ++i) a[i] = m[i] / std::sqrt(phi);
    }
    a[n - 1] = an;
    a[0] = -an;
  }

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / nn;
  double ssq = 0.0, num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ssq += (x[i] - mean) * (x[i] - mean);
    num += a[i] * x[i];
  }
  NormalityTest out;
  out.w = std::min(1.0, num * num / ssq);

  if (n == 3) {
    const double pi6 = 6.0 / M_PI;
    out.p_value = std::max(0.0, pi6 * (std::asin(std::sqrt(out.w)) -
                                       std::asin(std::sqrt(0.75))));
    return out;
  }
  const double w1 = std::log(1.0 - out.w);
  double z;
  if (n <= 11) {
    const double gamma = 0.459 * nn - 2.273;
    if (w1 >= gamma) {
      out.p_value = 1e-99;
      return out;
    }
    const double mu = 0.5440 - 0.39978 * nn + 0.025054 * nn * nn -
                      0.0006714 * nn * nn * nn;
    const double sigma = std::exp(1.3822 - 0.77857 * nn + 0.062767 * nn * nn -
                                  0.0020322 * nn * nn * nn);
    z = (-std::log(gamma - w1) - mu) / sigma;
  } else {
    const double ln = std::log(nn);
    const double mu = -1.5861 - 0.31082 * ln - 0.083751 * ln * ln +
                      0.0038915 * ln * ln * ln;
    const double sigma = std::exp(-0.4803 - 0.082676 * ln + 0.0030302 * ln * ln);
    z = (w1 - mu) / sigma;
  }
  out.p_value = boost::math::cdf(boost::math::complement(normal, z));
  return out;
}

}  // namespace ness
