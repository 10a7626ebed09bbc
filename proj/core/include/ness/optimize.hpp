#pragma once

#include <Eigen/Dense>
#include <deque>
#include <filesystem>
#include <functional>
#include <limits>

#include "ness/estimator.hpp"
#include "ness/ndo.hpp"
#include "ness/rng.hpp"

namespace ness {

Eigen::VectorXd sgd_step(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                         double eta);

// Solves (Re S + shift 1) delta = grad by Cholesky, falling back to a
// least-squares solve, and returns x - eta delta.
Eigen::VectorXd sr_step(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                        const CovarianceMatrix& s, double eta,
                        double diag_shift);

struct NagdSettings {
  double gamma = 0.9;          // fixed extrapolation factor
  bool dynamic_gamma = false;  // use t / (t + 3) instead
  bool precondition = true;    // belief (AdaBelief-style) scaling
  double belief_beta1 = 0.9;
  double belief_beta2 = 0.999;
  double belief_eps = 1e-8;
  bool bias_correction = true;  // divide the belief by 1 - beta2^t
  // Measure the quadratic term of the descent bound in the preconditioner
  // metric. When false the plain Euclidean norm is used.
  bool metric_bound = true;
  double lipschitz_init = 1.0;
  bool adapt_lipschitz = true;  // halve after an immediately accepted step
  double backtrack_factor = 2.0;
  double max_lipschitz = 1e12;
  // Drop the momentum when a step raises the cost above the previous one.
  bool restart_on_increase = false;
};

// Iterate history and step-size state of the accelerated method.
struct OptimizerState {
  Eigen::VectorXd x;
  Eigen::VectorXd x_prev;
  double lipschitz = 1.0;
  Eigen::VectorXd m_ema;  // gradient mean
  Eigen::VectorXd s_ema;  // belief: squared deviation from the mean
  long iteration = 0;
  long momentum_age = 0;  // steps since the last restart, drives t / (t + 3)
  double last_cost = std::numeric_limits<double>::infinity();
};

OptimizerState make_optimizer_state(const Eigen::VectorXd& x0,
                                    const NagdSettings& settings);

struct ObjectiveValue {
  double cost = 0.0;
  Eigen::VectorXd grad;
};

using CostFn = std::function<double(const Eigen::VectorXd&)>;
using GradFn = std::function<ObjectiveValue(const Eigen::VectorXd&)>;

struct StepDiagnostics {
  double gamma = 0.0;
  double cost_at_y = 0.0;
  double cost_new = 0.0;
  double upper_bound = 0.0;  // descent-lemma bound at the accepted point
  double lipschitz = 0.0;    // value the accepted step was taken with
  double step_norm = 0.0;
  int backtracks = 0;
  bool restarted = false;
};

// One accelerated step: extrapolate, precondition the gradient at the
// extrapolated point, then backtrack the local Lipschitz estimate until the
// descent-lemma bound holds in the preconditioner metric,
//   f(x+) <= f(y) + <g, x+ - y> + (L/2) ||x+ - y||_P^2,
// where x+ = y - P^{-1} g / L. Both functions must evaluate the same frozen
// objective.
StepDiagnostics nagd_plus_step(OptimizerState& state,
                               const NagdSettings& settings,
                               const CostFn& cost_fn, const GradFn& grad_fn);

// Gradient steps on ||rho - 1||^2 / 4^N with backtracked step sizes. Chains
// with N <= 6 use all pairs; longer chains draw `subsample_size` uniform
// pairs per step.
NdoParameters mse_pretrain(const NdoParameters& params, int n_steps,
                           int subsample_size, Rng& rng,
                           std::vector<double>* history = nullptr);

// Value of ||rho - 1||^2 / 4^N over all pairs.
double identity_mse(const NdoParameters& params);

NdoParameters inject_noise(const NdoParameters& params, double scale, Rng& rng);

// Stagnation detector for noise injection: fires when the relative cost
// change across `window` iterations falls below `rel_tol` while the cost is
// more than `ratio` times the best value seen.
class NoiseTrigger {
 public:
  NoiseTrigger(int window = 100, double rel_tol = 1e-4, double ratio = 10.0)
      : window_(window), rel_tol_(rel_tol), ratio_(ratio) {}

  bool observe(double cost);

  const std::deque<double>& history() const { return history_; }
  double best() const { return best_; }
  void restore(std::deque<double> history, double best) {
    history_ = std::move(history);
    best_ = best;
  }

 private:
  int window_;
  double rel_tol_;
  double ratio_;
  std::deque<double> history_;
  double best_ = std::numeric_limits<double>::infinity();
};

// Optimizer state file used for resuming runs, little-endian: magic
// "NESSOPT1", int64 iteration, int64 momentum age, float64 lipschitz,
// float64 last cost, float64 best cost, uint64 P, uint64 H, then x, x_prev,
// m_ema, s_ema (P float64 each) and H float64 entries of the noise-trigger
// history.
void save_optimizer_state(const std::filesystem::path& path,
                          const OptimizerState& state,
                          const NoiseTrigger& trigger);
void load_optimizer_state(const std::filesystem::path& path,
                          OptimizerState& state, NoiseTrigger& trigger);

}  // namespace ness
