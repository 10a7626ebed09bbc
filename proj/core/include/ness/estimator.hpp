#pragma once

#include <Eigen/Dense>

#include "ness/exact.hpp"
#include "ness/model.hpp"
#include "ness/ndo.hpp"
#include "ness/sampler.hpp"

namespace ness {

struct GradientEstimate {
  double cost = 0.0;
  Eigen::VectorXd grad;
  double variance_of_cost = 0.0;
  double n_effective = 0.0;  // (sum w)^2 / sum w^2
};

// P x P Hermitian covariance of the log-derivatives.
using CovarianceMatrix = Eigen::MatrixXcd;

// sum_x' L_{x x'} rho(x') / rho(x), with the row summed exactly.
Complex local_lindblad(const NdoEvaluator& eval, const LindbladMap& map,
                       ConfigurationPair x);

// |local_lindblad|^2.
double local_cost(const NdoParameters& params, const LindbladMap& map,
                  ConfigurationPair x);

// Cost and gradient estimators over one frozen batch.
//
// The batch was drawn from |rho_s|^(2 beta_rw) at sampling parameters s. At
// evaluation parameters theta every sample carries the importance weight
// |rho_theta(x)|^2 / |rho_s(x)|^(2 beta_rw), which equals the stored
// |rho_s|^(2 - 2 beta_rw) when theta = s. This lets a line search
// re-evaluate the objective at new parameters without drawing new samples.
class BatchObjective {
 public:
  BatchObjective(const LindbladMap& map, const SampleBatch& batch);

  double cost(const NdoParameters& params) const;
  GradientEstimate gradient(const NdoParameters& params) const;

  const SampleBatch& batch() const { return *batch_; }

 private:
  // Importance weights at theta, normalized to sum to one.
  std::vector<double> weights(const NdoEvaluator& eval,
                              std::vector<Complex>& log_rho) const;

  const LindbladMap* map_;
  const SampleBatch* batch_;
};

double estimate_cost(const NdoParameters& params, const LindbladMap& map,
                     const SampleBatch& batch);
GradientEstimate estimate_gradient(const NdoParameters& params,
                                   const LindbladMap& map,
                                   const SampleBatch& batch);

// Full-sum cost and gradient over every pair of `domain`.
GradientEstimate exact_gradient(const NdoParameters& params,
                                const LindbladMap& map,
                                PairDomain domain = PairDomain::SectorZero);

CovarianceMatrix estimate_s_matrix(const NdoParameters& params,
                                   const SampleBatch& batch);

}  // namespace ness
