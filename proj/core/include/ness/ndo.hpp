#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>

#include "ness/model.hpp"

namespace ness {

// Layer sizes of the two-RBM purified density operator: M = alpha N hidden
// units and K = beta_anc N ancillary units per net.
struct NdoShape {
  int n_sites = 0;
  int alpha = 1;
  int beta_anc = 1;

  int hidden() const { return alpha * n_sites; }
  int ancilla() const { return beta_anc * n_sites; }
  Eigen::Index param_count() const;
  void validate() const;

  friend bool operator==(const NdoShape&, const NdoShape&) = default;
};

// P = 2 (N + M + N M + N K) + K.
Eigen::Index param_count(int n_sites, int alpha, int beta_anc);

// Real parameters of the amplitude net (lambda) and the phase net (mu).
//
// Flat layout, each matrix row-major by site:
//   b^l (N), c^l (M), W^l (N x M), d^l (K), U^l (N x K),
//   b^m (N), c^m (M), W^m (N x M), U^m (N x K).
// The phase net has no ancillary bias: it cancels in the traced ancilla.
class NdoParameters {
 public:
  using RowMatrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstVec = Eigen::Map<const Eigen::VectorXd>;
  using ConstMat = Eigen::Map<const RowMatrix>;

  NdoParameters() = default;
  explicit NdoParameters(NdoShape shape);
  NdoParameters(NdoShape shape, Eigen::VectorXd flat);

  const NdoShape& shape() const { return shape_; }
  Eigen::Index size() const { return flat_.size(); }

  const Eigen::VectorXd& flat() const { return flat_; }
  Eigen::VectorXd& flat() { return flat_; }

  struct Offsets {
    Eigen::Index b_l, c_l, w_l, d_l, u_l, b_m, c_m, w_m, u_m, end;
  };
  const Offsets& offsets() const { return off_; }

  ConstVec b_amp() const { return vec(off_.b_l, shape_.n_sites); }
  ConstVec c_amp() const { return vec(off_.c_l, shape_.hidden()); }
  ConstMat w_amp() const { return mat(off_.w_l, shape_.hidden()); }
  ConstVec d_amp() const { return vec(off_.d_l, shape_.ancilla()); }
  ConstMat u_amp() const { return mat(off_.u_l, shape_.ancilla()); }
  ConstVec b_phase() const { return vec(off_.b_m, shape_.n_sites); }
  ConstVec c_phase() const { return vec(off_.c_m, shape_.hidden()); }
  ConstMat w_phase() const { return mat(off_.w_m, shape_.hidden()); }
  ConstMat u_phase() const { return mat(off_.u_m, shape_.ancilla()); }

 private:
  ConstVec vec(Eigen::Index at, Eigen::Index len) const {
    return ConstVec(flat_.data() + at, len);
  }
  ConstMat mat(Eigen::Index at, Eigen::Index cols) const {
    return ConstMat(flat_.data() + at, shape_.n_sites, cols);
  }

  NdoShape shape_;
  Offsets off_{};
  Eigen::VectorXd flat_;
};

// log 2cosh(z), evaluated without overflow.
double log_g(double z);
Complex log_g(Complex z);

// Per-configuration quantities shared by every pair with that configuration
// on one side.
struct SideFeatures {
  double log_g_amp = 0.0;    // sum_j log G(y^l_j(s))
  double log_g_phase = 0.0;  // sum_j log G(y^m_j(s))
  double bias_amp = 0.0;     // b^l . s
  double bias_phase = 0.0;   // b^m . s
  Eigen::VectorXd anc_amp;   // (U^l)^T s
  Eigen::VectorXd anc_phase; // (U^m)^T s
  Eigen::VectorXd tanh_amp;  // tanh y^l(s), filled on request
  Eigen::VectorXd tanh_phase;
};

// Evaluates log rho and its parameter derivatives for fixed parameters.
// For N <= kTableSites the per-configuration features of all 2^N states are
// tabulated at construction; larger chains compute them on demand. The
// evaluator is immutable after construction and safe to share across
// threads.
class NdoEvaluator {
 public:
  static constexpr int kTableSites = 12;

  explicit NdoEvaluator(const NdoParameters& params, bool with_tanh = true);

  const NdoParameters& params() const { return params_; }

  Complex log_rho(ConfigurationPair x) const;

  // acc += coeff * d log rho / d theta evaluated at x.
  void add_log_derivatives(ConfigurationPair x, Complex coeff,
                           Eigen::Ref<Eigen::VectorXcd> acc) const;

  Eigen::VectorXcd log_derivatives(ConfigurationPair x) const;

  SideFeatures features(BasisState s, bool with_tanh) const;

 private:
  const SideFeatures& side(BasisState s, SideFeatures& scratch,
                           bool with_tanh) const;
  Complex combine(const SideFeatures& r, const SideFeatures& c) const;

  NdoParameters params_;
  bool with_tanh_;
  std::vector<SideFeatures> table_;
};

Complex log_rho(const NdoParameters& params, ConfigurationPair x);
Eigen::VectorXcd log_derivatives(const NdoParameters& params,
                                 ConfigurationPair x);

// All entries i.i.d. normal(0, stddev^2), deterministic in the seed.
NdoParameters init_params(NdoShape shape, std::uint64_t seed, double stddev);
inline NdoParameters init_params(int n_sites, int alpha, int beta_anc,
                                 std::uint64_t seed, double stddev) {
  return init_params(NdoShape{n_sites, alpha, beta_anc}, seed, stddev);
}

// Binary checkpoint, little-endian:
//   [0, 8)   magic "NESSNDO1"
//   [8, 24)  uint32 n_sites, alpha, beta_anc, reserved (0)
//   [24, 48) uint64 seed, iteration, parameter count P
//   [48, ..) P float64 parameters in flat layout order
struct Checkpoint {
  NdoParameters params;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ness
