#include "ness/estimator.hpp"

#include <cmath>
#include <spdlog/spdlog.h>
#include <unordered_map>

#include "ness/errors.hpp"

namespace ness {

namespace {

void require_finite(Complex z) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
    throw NonFiniteAmplitude("log rho is not finite");
}

// Collects coefficients c(x) for sum_x c(x) D(x), so that every distinct
// pair has its log-derivatives evaluated once.
class CoefficientMap {
 public:
  explicit CoefficientMap(int n_sites) : n_(n_sites) {
    if (2 * n_sites <= 16) {
      dense_.assign(std::size_t{1} << (2 * n_sites), 0.0);
      seen_.assign(dense_.size(), false);
    }
  }

  void add(ConfigurationPair x, Complex c) {
    if (!dense_.empty()) {
      const auto i = pair_index(x, n_);
      if (!seen_[i]) {
        seen_[i] = true;
        touched_.push_back(x);
      }
      dense_[i] += c;
    } else {
      sparse_[x] += c;
    }
  }

  template <class Fn>
  void for_each(Fn&& fn) const {
    if (!dense_.empty()) {
      for (const auto& x : touched_) fn(x, dense_[pair_index(x, n_)]);
    } else {
      for (const auto& [x, c] : sparse_) fn(x, c);
    }
  }

 private:
  int n_;
  std::vector<Complex> dense_;
  std::vector<bool> seen_;
  std::vector<ConfigurationPair> touched_;
  std::unordered_map<ConfigurationPair, Complex, PairHash> sparse_;
};

// log rho at row entries. An enumeration batch covers a domain closed under
// rows, so for short chains every entry is looked up from the batch values
// instead of being re-evaluated.
class RowLogRho {
 public:
  RowLogRho(const NdoEvaluator& eval, const SampleBatch& batch,
            const std::vector<Complex>& log_rho)
      : eval_(&eval), n_(batch.n_sites) {
    if (batch.multiplicity.empty() || 2 * n_ > 16) return;
    table_.assign(std::size_t{1} << (2 * n_), Complex(0.0));
    known_.assign(table_.size(), false);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto k = pair_index(batch.pairs[i], n_);
      table_[k] = log_rho[i];
      known_[k] = true;
    }
  }

  Complex operator()(ConfigurationPair x) const {
    if (!table_.empty()) {
      const auto k = pair_index(x, n_);
      if (known_[k]) return table_[k];
    }
    return eval_->log_rho(x);
  }

 private:
  const NdoEvaluator* eval_;
  int n_;
  std::vector<Complex> table_;
  std::vector<bool> known_;
};

}  // namespace

Complex local_lindblad(const NdoEvaluator& eval, const LindbladMap& map,
                       ConfigurationPair x) {
  const Complex lr = eval.log_rho(x);
  require_finite(lr);
  std::vector<LindbladEntry> row;
  map.row(x, row);
  Complex acc = 0.0;
  for (const auto& e : row) acc += e.value * std::exp(eval.log_rho(e.pair) - lr);
  return acc;
}

double local_cost(const NdoParameters& params, const LindbladMap& map,
                  ConfigurationPair x) {
  if (delta_sz(x) != 0)
    throw ConfigError("local cost requested outside the Delta S^z = 0 sector");
  const NdoEvaluator eval(params, false);
  return std::norm(local_lindblad(eval, map, x));
}

BatchObjective::BatchObjective(const LindbladMap& map, const SampleBatch& batch)
    : map_(&map), batch_(&batch) {
  if (batch.size() == 0) throw ZeroWeightSum("empty sample batch");
  if (batch.n_sites != map.n_sites())
    throw ConfigError("batch and Lindblad map have different chain lengths");
}

std::vector<double> BatchObjective::weights(const NdoEvaluator& eval,
                                            std::vector<Complex>& log_rho) const {
  const auto& b = *batch_;
  const std::size_t n = b.size();
  log_rho.resize(n);
  std::vector<double> lw(n);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    log_rho[i] = eval.log_rho(b.pairs[i]);
    require_finite(log_rho[i]);
    const double m = b.multiplicity_of(i);
    lw[i] = m > 0.0 ? 2.0 * log_rho[i].real() -
                          2.0 * b.beta_rw * b.log_rho_values[i].real() +
                          std::log(m)
                    : -std::numeric_limits<double>::infinity();
    shift = std::max(shift, lw[i]);
  }
  if (!std::isfinite(shift)) throw ZeroWeightSum("all sample weights vanish");
  double total = 0.0;
  for (double& w : lw) {
    w = std::exp(w - shift);
    total += w;
  }
  if (!(total > 0.0)) throw ZeroWeightSum("sample weights sum to zero");
  for (double& w : lw) w /= total;
  return lw;
}

double BatchObjective::cost(const NdoParameters& params) const {
  const NdoEvaluator eval(params, false);
  std::vector<Complex> log_rho;
  const auto w = weights(eval, log_rho);
  const RowLogRho row_log_rho(eval, *batch_, log_rho);
  std::vector<LindbladEntry> row;
  double c = 0.0;
  for (std::size_t i = 0; i < batch_->size(); ++i) {
    if (w[i] == 0.0) continue;
    map_->row(batch_->pairs[i], row);
    Complex loc = 0.0;
    for (const auto& e : row)
      loc += e.value * std::exp(row_log_rho(e.pair) - log_rho[i]);
    c += w[i] * std::norm(loc);
  }
  return c;
}

GradientEstimate BatchObjective::gradient(const NdoParameters& params) const {
  const NdoEvaluator eval(params, true);
  const auto& b = *batch_;
  const int n_sites = b.n_sites;
  std::vector<Complex> log_rho;
  const auto w = weights(eval, log_rho);
  const RowLogRho row_log_rho(eval, b, log_rho);

  // First pass: local values, keeping each row for the backward pass.
  std::vector<Complex> loc(b.size());
  std::vector<std::size_t> row_begin(b.size() + 1, 0);
  std::vector<LindbladEntry> scaled;
  scaled.reserve(b.size() * map_->max_row_size());
  std::vector<LindbladEntry> row;
  double cost = 0.0;
  double sum_w2 = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    row_begin[i] = scaled.size();
    if (w[i] != 0.0) {
      map_->row(b.pairs[i], row);
      Complex acc = 0.0;
      for (const auto& e : row) {
        const Complex v = e.value * std::exp(row_log_rho(e.pair) - log_rho[i]);
        scaled.push_back({e.pair, v});
        acc += v;
      }
      loc[i] = acc;
      cost += w[i] * std::norm(acc);
      sum_w2 += w[i] * w[i];
    }
  }
  row_begin[b.size()] = scaled.size();

  double variance = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    variance += w[i] * std::pow(std::norm(loc[i]) - cost, 2);

  // grad_k = 2 Re[ <conj(L) Lambda_k> - C <D_k> ] with
  // Lambda_k(x) = sum_x' L_{xx'} rho(x')/rho(x) D_k(x').
  CoefficientMap coeffs(n_sites);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (w[i] == 0.0) continue;
    const Complex lc = w[i] * std::conj(loc[i]);
    for (std::size_t e = row_begin[i]; e < row_begin[i + 1]; ++e)
      coeffs.add(scaled[e].pair, lc * scaled[e].value);
    coeffs.add(b.pairs[i], -cost * w[i]);
  }
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(params.size());
  coeffs.for_each([&](ConfigurationPair x, Complex c) {
    if (c != 0.0) eval.add_log_derivatives(x, c, acc);
  });

  GradientEstimate g;
  g.cost = cost;
  g.grad = 2.0 * acc.real();
  g.variance_of_cost = variance;
  g.n_effective = 1.0 / sum_w2;
  if (b.multiplicity.empty() &&
      g.n_effective < 0.1 * static_cast<double>(b.size()))
    spdlog::warn("effective sample size {:.1f} is below 10% of the batch ({})",
                 g.n_effective, b.size());
  if (!g.grad.allFinite()) throw NonFiniteAmplitude("gradient is not finite");
  return g;
}

double estimate_cost(const NdoParameters& params, const LindbladMap& map,
                     const SampleBatch& batch) {
  return BatchObjective(map, batch).cost(params);
}

GradientEstimate estimate_gradient(const NdoParameters& params,
                                   const LindbladMap& map,
                                   const SampleBatch& batch) {
  return BatchObjective(map, batch).gradient(params);
}

GradientEstimate exact_gradient(const NdoParameters& params,
                                const LindbladMap& map, PairDomain domain) {
  const SampleBatch batch = enumerate_batch(params, domain, 1.0);
  return BatchObjective(map, batch).gradient(params);
}

CovarianceMatrix estimate_s_matrix(const NdoParameters& params,
                                   const SampleBatch& batch) {
  if (batch.size() == 0) throw ZeroWeightSum("empty sample batch");
  const NdoEvaluator eval(params, true);
  const std::size_t n = batch.size();
  const Eigen::Index p = params.size();

  std::vector<double> w(n);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Complex lr = eval.log_rho(batch.pairs[i]);
    require_finite(lr);
    const double m = batch.multiplicity_of(i);
    w[i] = m > 0.0 ? 2.0 * lr.real() -
                         2.0 * batch.beta_rw * batch.log_rho_values[i].real() +
                         std::log(m)
                   : -std::numeric_limits<double>::infinity();
    shift = std::max(shift, w[i]);
  }
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - shift);
    total += x;
  }
  if (!(total > 0.0)) throw ZeroWeightSum("sample weights sum to zero");

  Eigen::MatrixXcd d(static_cast<Eigen::Index>(n), p);
  for (std::size_t i = 0; i < n; ++i)
    d.row(static_cast<Eigen::Index>(i)) =
        eval.log_derivatives(batch.pairs[i]).transpose();
  Eigen::VectorXd wn = Eigen::Map<Eigen::VectorXd>(w.data(), n) / total;
  const Eigen::RowVectorXcd mean = wn.transpose().cast<Complex>() * d;
  d.rowwise() -= mean;
  d = wn.cwiseSqrt().cast<Complex>().asDiagonal() * d;
  CovarianceMatrix s = d.adjoint() * d;
  return 0.5 * (s + s.adjoint());
}

}  // namespace ness
