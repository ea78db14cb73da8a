#pragma once

#include <cstdint>
#include <vector>

#include "mtpsr/kernels.hpp"
#include "mtpsr/policy.hpp"
#include "mtpsr/psr_model.hpp"

namespace mtpsr {

// sum_x |p(x) - q(x)|, without the customary 1/2.
double tv(const TrajectoryLaw& p, const TrajectoryLaw& q);

// (1/2) sum_x (sqrt p - sqrt q)^2; equals 1 - sum sqrt(pq) for probability laws.
double hellinger_sq(const TrajectoryLaw& p, const TrajectoryLaw& q);

// sum p log(p/q) with 0 log 0 = 0; +inf when q vanishes on p's support.
double kl(const TrajectoryLaw& p, const TrajectoryLaw& q);

// (1/(alpha-1)) log sum p^alpha q^(1-alpha); +inf when q vanishes on p's
// support. Throws ParameterError for alpha <= 1.
double renyi(double alpha, const TrajectoryLaw& p, const TrajectoryLaw& q);

// sum_n tv(P_{theta_n}^{pi_n}, P_{theta'_n}^{pi_n})
double pairwise_additive(const std::vector<const PsrModel*>& models, const std::vector<const PsrModel*>& others,
                         const std::vector<const Policy*>& policies);

// max_i max_pi sum_tau |l_i - g_i| pi(tau) over a precomputed weight table.
double policy_weighted_linf(const std::vector<TrajectoryLaw>& l, const std::vector<TrajectoryLaw>& g,
                            const PolicyWeightTable& weights);
double policy_weighted_linf(const std::vector<TrajectoryLaw>& l, const std::vector<TrajectoryLaw>& g,
                            const PolicyClass& policies, std::uint64_t budget = kDefaultEnumerationCap);

struct EllipticalPotentialResult {
  double lhs = 0.0;  // sum_k min{||x_k||^2_{U_k^{-1}}, B}
  double rhs = 0.0;  // (1+B) r log(1 + K/lambda)
  bool holds() const { return lhs <= rhs; }
};

// Runs the potential sum on an explicit sequence; U_k = lambda I + sum_{t<k} x_t x_t^T.
EllipticalPotentialResult elliptical_potential(const std::vector<Vector>& xs, int rank, double lambda, double cap);

// Draws K vectors of norm <= 1 spanning a random rank-r subspace of R^dim.
std::vector<Vector> random_low_rank_sequence(int dim, int rank, int count, std::uint64_t seed);

}  // namespace mtpsr
