#include "ness/optimize.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include "ness/errors.hpp"
#include "ness/exact.hpp"

namespace ness {

Eigen::VectorXd sgd_step(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                         double eta) {
  if (!(eta > 0.0)) throw ConfigError("step size must be positive");
  return x - eta * grad;
}

Eigen::VectorXd sr_step(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                        const CovarianceMatrix& s, double eta,
                        double diag_shift) {
  if (!(eta > 0.0)) throw ConfigError("step size must be positive");
  if (!(diag_shift >= 0.0)) throw ConfigError("diagonal shift must be >= 0");
  Eigen::MatrixXd a = s.real();
  a.diagonal().array() += diag_shift;

  Eigen::VectorXd delta;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) delta = llt.solve(grad);
  if (delta.size() == 0 || !delta.allFinite()) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    delta = cod.solve(grad);
  }
  if (!delta.allFinite())
    throw SingularS("S matrix could not be inverted by either solver");
  return x - eta * delta;
}

OptimizerState make_optimizer_state(const Eigen::VectorXd& x0,
                                    const NagdSettings& settings) {
  if (!(settings.lipschitz_init > 0.0))
    throw ConfigError("initial Lipschitz estimate must be positive");
  OptimizerState st;
  st.x = x0;
  st.x_prev = x0;
  st.lipschitz = settings.lipschitz_init;
  st.m_ema = Eigen::VectorXd::Zero(x0.size());
  st.s_ema = Eigen::VectorXd::Zero(x0.size());
  return st;
}

StepDiagnostics nagd_plus_step(OptimizerState& state,
                               const NagdSettings& settings,
                               const CostFn& cost_fn, const GradFn& grad_fn) {
  StepDiagnostics diag;
  const double t = static_cast<double>(state.iteration);
  const double age = static_cast<double>(state.momentum_age);
  diag.gamma = settings.dynamic_gamma ? age / (age + 3.0) : settings.gamma;
  const Eigen::VectorXd y = state.x + diag.gamma * (state.x - state.x_prev);

  const ObjectiveValue at_y = grad_fn(y);
  if (!std::isfinite(at_y.cost) || !at_y.grad.allFinite())
    throw NonFiniteAmplitude("objective is not finite at the extrapolated point");
  const Eigen::VectorXd& g = at_y.grad;
  diag.cost_at_y = at_y.cost;

  Eigen::VectorXd metric = Eigen::VectorXd::Ones(g.size());
  if (settings.precondition) {
    const double b1 = settings.belief_beta1;
    const double b2 = settings.belief_beta2;
    state.m_ema = b1 * state.m_ema + (1.0 - b1) * g;
    state.s_ema = b2 * state.s_ema +
                  (1.0 - b2) * (g - state.m_ema).array().square().matrix();
    state.s_ema.array() += settings.belief_eps;
    const double correction =
        settings.bias_correction ? 1.0 - std::pow(b2, t + 1.0) : 1.0;
    metric = (state.s_ema.array() / correction).sqrt() + settings.belief_eps;
  }
  const Eigen::VectorXd direction = g.cwiseQuotient(metric);

  // Roundoff allowance on the bound; the objective itself is a finite sum.
  const double slack = 1e-12 * std::abs(at_y.cost);
  double lip = state.lipschitz;
  for (;;) {
    const Eigen::VectorXd x_new = y - direction / lip;
    const Eigen::VectorXd dx = x_new - y;
    const double quad = settings.metric_bound ? dx.cwiseProduct(metric).dot(dx)
                                              : dx.squaredNorm();
    const double bound = at_y.cost + g.dot(dx) + 0.5 * lip * quad;
    const double f_new = cost_fn(x_new);
    if (std::isfinite(f_new) && f_new <= bound + slack) {
      diag.cost_new = f_new;
      diag.upper_bound = bound;
      diag.lipschitz = lip;
      diag.step_norm = (x_new - state.x).norm();
      state.x_prev = state.x;
      state.x = x_new;
      break;
    }
    lip *= settings.backtrack_factor;
    ++diag.backtracks;
    if (lip > settings.max_lipschitz)
      throw BacktrackOverflow(fmt::format(
          "Lipschitz estimate exceeded {:.3g} at iteration {}",
          settings.max_lipschitz, state.iteration));
  }
  state.lipschitz = (diag.backtracks == 0 && settings.adapt_lipschitz)
                        ? lip / settings.backtrack_factor
                        : lip;
  ++state.iteration;
  ++state.momentum_age;
  if (settings.restart_on_increase && diag.cost_new > state.last_cost) {
    state.x_prev = state.x;
    state.momentum_age = 0;
    diag.restarted = true;
  }
  state.last_cost = diag.cost_new;
  return diag;
}

// ---------------------------------------------------------------------------
// Warm start

namespace {

struct MseValue {
  double value = 0.0;
  Eigen::VectorXd grad;
};

MseValue mse_on(const NdoParameters& params,
                const std::vector<ConfigurationPair>& pairs, double norm,
                bool with_grad) {
  const NdoEvaluator eval(params, with_grad);
  MseValue out;
  Eigen::VectorXcd acc;
  if (with_grad) acc = Eigen::VectorXcd::Zero(params.size());
  for (const auto& x : pairs) {
    const Complex rho = std::exp(eval.log_rho(x));
    const Complex diff = rho - (x.row == x.col ? 1.0 : 0.0);
    out.value += std::norm(diff);
    // d|rho - t|^2 = 2 Re[conj(rho - t) rho D]
    if (with_grad) eval.add_log_derivatives(x, std::conj(diff) * rho, acc);
  }
  out.value /= norm;
  if (with_grad) out.grad = (2.0 / norm) * acc.real();
  return out;
}

}  // namespace

double identity_mse(const NdoParameters& params) {
  const int n = params.shape().n_sites;
  if (n > 8) throw TooLarge("full MSE limited to N <= 8");
  const auto pairs = all_pairs(n);
  return mse_on(params, pairs, static_cast<double>(pairs.size()), false).value;
}

NdoParameters mse_pretrain(const NdoParameters& params, int n_steps,
                           int subsample_size, Rng& rng,
                           std::vector<double>* history) {
  if (n_steps < 0) throw ConfigError("pretrain steps must be >= 0");
  const int n = params.shape().n_sites;
  const bool full = n <= 6;
  if (!full && subsample_size < 1)
    throw ConfigError("subsample size must be positive for N > 6");

  NdoParameters current = params;
  const std::vector<ConfigurationPair> everything =
      full ? all_pairs(n) : std::vector<ConfigurationPair>{};
  const std::uint64_t mask = (std::uint64_t{1} << (2 * n)) - 1;
  double lip = 1.0;

  for (int step = 0; step < n_steps; ++step) {
    std::vector<ConfigurationPair> pairs;
    if (full) {
      pairs = everything;
    } else {
      pairs.reserve(subsample_size);
      for (int i = 0; i < subsample_size; ++i)
        pairs.push_back(pair_from_index(rng() & mask, n));
    }
    const double norm = static_cast<double>(pairs.size());
    const MseValue at = mse_on(current, pairs, norm, true);
    if (history) history->push_back(at.value);

    bool first = true;
    for (;;) {
      NdoParameters trial(current.shape(), current.flat() - at.grad / lip);
      const double f = mse_on(trial, pairs, norm, false).value;
      const double bound = at.value - 0.5 * at.grad.squaredNorm() / lip;
      if (std::isfinite(f) && f <= bound + 1e-12 * std::abs(at.value)) {
        current = std::move(trial);
        break;
      }
      lip *= 2.0;
      first = false;
      if (lip > 1e300) throw BacktrackOverflow("MSE warm start failed to descend");
    }
    if (first) lip *= 0.5;
  }
  return current;
}

NdoParameters inject_noise(const NdoParameters& params, double scale, Rng& rng) {
  if (!(scale >= 0.0)) throw ConfigError("noise scale must be >= 0");
  NdoParameters out = params;
  if (scale == 0.0) return out;
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.flat()[i] += normal(rng);
  return out;
}

bool NoiseTrigger::observe(double cost) {
  best_ = std::min(best_, cost);
  history_.push_back(cost);
  if (static_cast<int>(history_.size()) > window_ + 1) history_.pop_front();
  if (static_cast<int>(history_.size()) <= window_) return false;
  const double old = history_.front();
  const double rel = std::abs(cost - old) / std::max(std::abs(old), 1e-300);
  if (rel < rel_tol_ && cost > ratio_ * best_) {
    history_.clear();
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Resume files

namespace {

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void put_vec(std::ostream& os, const Eigen::VectorXd& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Eigen::VectorXd get_vec(std::istream& is, std::uint64_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

void save_optimizer_state(const std::filesystem::path& path,
                          const OptimizerState& state,
                          const NoiseTrigger& trigger) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write optimizer state " + path.string());
  os.write("NESSOPT1", 8);
  put<std::int64_t>(os, state.iteration);
  put<std::int64_t>(os, state.momentum_age);
  put<double>(os, state.lipschitz);
  put<double>(os, state.last_cost);
  put<double>(os, trigger.best());
  put<std::uint64_t>(os, static_cast<std::uint64_t>(state.x.size()));
  put<std::uint64_t>(os, trigger.history().size());
  put_vec(os, state.x);
  put_vec(os, state.x_prev);
  put_vec(os, state.m_ema);
  put_vec(os, state.s_ema);
  for (double c : trigger.history()) put<double>(os, c);
}

void load_optimizer_state(const std::filesystem::path& path,
                          OptimizerState& state, NoiseTrigger& trigger) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open optimizer state " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "NESSOPT1")
    throw ConfigError(path.string() + " is not an optimizer state file");
  state.iteration = static_cast<long>(get<std::int64_t>(is));
  state.momentum_age = static_cast<long>(get<std::int64_t>(is));
  state.lipschitz = get<double>(is);
  state.last_cost = get<double>(is);
  const double best = get<double>(is);
  const auto p = get<std::uint64_t>(is);
  const auto h = get<std::uint64_t>(is);
  state.x = get_vec(is, p);
  state.x_prev = get_vec(is, p);
  state.m_ema = get_vec(is, p);
  state.s_ema = get_vec(is, p);
  std::deque<double> history;
  for (std::uint64_t i = 0; i < h; ++i) history.push_back(get<double>(is));
  if (!is) throw ConfigError("truncated optimizer state " + path.string());
  trigger.restore(std::move(history), best);
}

}  // namespace ness
