#include "ness/ndo.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <fstream>
#include <random>

#include "ness/errors.hpp"

namespace ness {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

Eigen::Index param_count(int n_sites, int alpha, int beta_anc) {
  const Eigen::Index n = n_sites;
  const Eigen::Index m = static_cast<Eigen::Index>(alpha) * n_sites;
  const Eigen::Index k = static_cast<Eigen::Index>(beta_anc) * n_sites;
  return 2 * (n + m + n * m + n * k) + k;
}

Eigen::Index NdoShape::param_count() const {
  return ness::param_count(n_sites, alpha, beta_anc);
}

void NdoShape::validate() const {
  if (n_sites < 1 || n_sites > kMaxSites)
    throw ConfigError(fmt::format("ansatz n_sites {} out of range", n_sites));
  if (alpha < 1 || beta_anc < 1)
    throw ConfigError("hidden and ancillary densities must be positive integers");
}

NdoParameters::NdoParameters(NdoShape shape)
    : NdoParameters(shape, Eigen::VectorXd::Zero(shape.param_count())) {}

NdoParameters::NdoParameters(NdoShape shape, Eigen::VectorXd flat)
    : shape_(shape), flat_(std::move(flat)) {
  shape_.validate();
  if (flat_.size() != shape_.param_count())
    throw ConfigError(fmt::format("expected {} parameters, got {}",
                                  shape_.param_count(), flat_.size()));
  const Eigen::Index n = shape_.n_sites;
  const Eigen::Index m = shape_.hidden();
  const Eigen::Index k = shape_.ancilla();
  Eigen::Index at = 0;
  auto take = [&at](Eigen::Index len) {
    const Eigen::Index here = at;
    at += len;
    return here;
  };
  off_.b_l = take(n);
  off_.c_l = take(m);
  off_.w_l = take(n * m);
  off_.d_l = take(k);
  off_.u_l = take(n * k);
  off_.b_m = take(n);
  off_.c_m = take(m);
  off_.w_m = take(n * m);
  off_.u_m = take(n * k);
  off_.end = at;
}

double log_g(double z) {
  const double a = std::abs(z);
  return a + std::log1p(std::exp(-2.0 * a));
}

Complex log_g(Complex z) {
  // G is even; reflect into Re z >= 0 so that |exp(-2z)| <= 1.
  if (z.real() < 0.0) z = -z;
  return z + std::log(1.0 + std::exp(-2.0 * z));
}

// ---------------------------------------------------------------------------
// NdoEvaluator

NdoEvaluator::NdoEvaluator(const NdoParameters& params, bool with_tanh)
    : params_(params), with_tanh_(with_tanh) {
  const int n = params_.shape().n_sites;
  if (n <= kTableSites) {
    table_.reserve(std::size_t{1} << n);
    for (BasisState s = 0; s < (BasisState{1} << n); ++s)
      table_.push_back(features(s, with_tanh_));
  }
}

SideFeatures NdoEvaluator::features(BasisState s, bool with_tanh) const {
  const auto& p = params_;
  const int n = p.shape().n_sites;
  Eigen::VectorXd spins(n);
  for (int i = 0; i < n; ++i) spins[i] = spin_at(s, i);

  SideFeatures f;
  const Eigen::VectorXd y_amp = p.w_amp().transpose() * spins + p.c_amp();
  const Eigen::VectorXd y_phase = p.w_phase().transpose() * spins + p.c_phase();
  for (Eigen::Index j = 0; j < y_amp.size(); ++j) {
    f.log_g_amp += log_g(y_amp[j]);
    f.log_g_phase += log_g(y_phase[j]);
  }
  f.bias_amp = p.b_amp().dot(spins);
  f.bias_phase = p.b_phase().dot(spins);
  f.anc_amp = p.u_amp().transpose() * spins;
  f.anc_phase = p.u_phase().transpose() * spins;
  if (with_tanh) {
    f.tanh_amp = y_amp.array().tanh();
    f.tanh_phase = y_phase.array().tanh();
  }
  return f;
}

const SideFeatures& NdoEvaluator::side(BasisState s, SideFeatures& scratch,
                                       bool with_tanh) const {
  if (!table_.empty() && (with_tanh_ || !with_tanh)) return table_[s];
  scratch = features(s, with_tanh);
  return scratch;
}

Complex NdoEvaluator::combine(const SideFeatures& r,
                              const SideFeatures& c) const {
  const double re = 0.5 * (r.log_g_amp + c.log_g_amp + r.bias_amp + c.bias_amp);
  const double im =
      0.5 * (r.log_g_phase - c.log_g_phase + r.bias_phase - c.bias_phase);
  Complex total{re, im};
  const auto d = params_.d_amp();
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    const Complex z{0.5 * (r.anc_amp[k] + c.anc_amp[k]) + d[k],
                    0.5 * (r.anc_phase[k] - c.anc_phase[k])};
    total += log_g(z);
  }
  return total;
}

Complex NdoEvaluator::log_rho(ConfigurationPair x) const {
  SideFeatures sr, sc;
  return combine(side(x.row, sr, false), side(x.col, sc, false));
}

void NdoEvaluator::add_log_derivatives(ConfigurationPair x, Complex coeff,
                                       Eigen::Ref<Eigen::VectorXcd> acc) const {
  const auto& p = params_;
  const auto& off = p.offsets();
  const int n = p.shape().n_sites;
  const Eigen::Index m = p.shape().hidden();
  const Eigen::Index k = p.shape().ancilla();
  SideFeatures scratch_r, scratch_c;
  const SideFeatures& r = side(x.row, scratch_r, true);
  const SideFeatures& c = side(x.col, scratch_c, true);

  const Complex half = 0.5 * coeff;
  const Complex ihalf = Complex{0.0, 0.5} * coeff;

  // d log G(z_k) / dz_k for the traced ancillas.
  const auto d = p.d_amp();
  Eigen::VectorXcd t_anc(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    const Complex z{0.5 * (r.anc_amp[a] + c.anc_amp[a]) + d[a],
                    0.5 * (r.anc_phase[a] - c.anc_phase[a])};
    t_anc[a] = coeff * std::tanh(z);
  }

  for (int i = 0; i < n; ++i) {
    const double sr = spin_at(x.row, i);
    const double sc = spin_at(x.col, i);
    const double plus = 0.5 * (sr + sc);
    const double minus = 0.5 * (sr - sc);
    acc[off.b_l + i] += coeff * plus;
    acc[off.b_m + i] += Complex{0.0, 1.0} * coeff * minus;
    for (Eigen::Index j = 0; j < m; ++j) {
      acc[off.w_l + i * m + j] += half * (sr * r.tanh_amp[j] + sc * c.tanh_amp[j]);
      acc[off.w_m + i * m + j] +=
          ihalf * (sr * r.tanh_phase[j] - sc * c.tanh_phase[j]);
    }
    if (plus != 0.0)
      for (Eigen::Index a = 0; a < k; ++a) acc[off.u_l + i * k + a] += plus * t_anc[a];
    if (minus != 0.0)
      for (Eigen::Index a = 0; a < k; ++a)
        acc[off.u_m + i * k + a] += Complex{0.0, minus} * t_anc[a];
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    acc[off.c_l + j] += half * (r.tanh_amp[j] + c.tanh_amp[j]);
    acc[off.c_m + j] += ihalf * (r.tanh_phase[j] - c.tanh_phase[j]);
  }
  for (Eigen::Index a = 0; a < k; ++a) acc[off.d_l + a] += t_anc[a];
}

Eigen::VectorXcd NdoEvaluator::log_derivatives(ConfigurationPair x) const {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(params_.size());
  add_log_derivatives(x, 1.0, out);
  return out;
}

Complex log_rho(const NdoParameters& params, ConfigurationPair x) {
  const NdoEvaluator eval(params, false);
  return eval.log_rho(x);
}

Eigen::VectorXcd log_derivatives(const NdoParameters& params,
                                 ConfigurationPair x) {
  const NdoEvaluator eval(params, true);
  return eval.log_derivatives(x);
}

NdoParameters init_params(NdoShape shape, std::uint64_t seed, double stddev) {
  if (!(stddev > 0.0)) throw ConfigError("init stddev must be positive");
  shape.validate();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::VectorXd flat(shape.param_count());
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = normal(gen);
  return NdoParameters(shape, std::move(flat));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::array<char, 8> kCheckpointMagic{'N', 'E', 'S', 'S',
                                               'N', 'D', 'O', '1'};

template <class T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  const auto& shape = ckpt.params.shape();
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.n_sites));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.alpha));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.beta_anc));
  put<std::uint32_t>(os, 0);
  put<std::uint64_t>(os, ckpt.seed);
  put<std::uint64_t>(os, ckpt.iteration);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ckpt.params.size()));
  os.write(reinterpret_cast<const char*>(ckpt.params.flat().data()),
           static_cast<std::streamsize>(ckpt.params.size() * sizeof(double)));
  if (!os) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic)
    throw ConfigError(path.string() + " is not a parameter checkpoint");
  NdoShape shape;
  shape.n_sites = static_cast<int>(get<std::uint32_t>(is));
  shape.alpha = static_cast<int>(get<std::uint32_t>(is));
  shape.beta_anc = static_cast<int>(get<std::uint32_t>(is));
  get<std::uint32_t>(is);
  Checkpoint ckpt;
  ckpt.seed = get<std::uint64_t>(is);
  ckpt.iteration = get<std::uint64_t>(is);
  const auto count = get<std::uint64_t>(is);
  if (!is) throw ConfigError("truncated checkpoint header in " + path.string());
  shape.validate();
  if (count != static_cast<std::uint64_t>(shape.param_count()))
    throw ConfigError("checkpoint parameter count does not match its shape");
  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  is.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw ConfigError("truncated checkpoint data in " + path.string());
  ckpt.params = NdoParameters(shape, std::move(flat));
  return ckpt;
}

}  // namespace ness
