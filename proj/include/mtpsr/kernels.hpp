#pragma once

#include <cstddef>
#include <vector>

#include "mtpsr/policy.hpp"
#include "mtpsr/psr_model.hpp"

namespace mtpsr {

// Dense vector indexed by full-length trajectory index.
using TrajectoryLaw = std::vector<double>;

enum class Exec { Serial, Parallel };

// P(tau^o | tau^a) for every tau_H, clamped to [0,1]. The parallel version
// walks disjoint prefix subtrees per thread; the serial version evaluates each
// trajectory's operator product independently. Both perform the same
// floating-point operations in the same order, so results are bit-identical.
TrajectoryLaw dynamics_law(const PsrModel& model, Exec exec = Exec::Parallel,
                           const Tolerances& tol = default_tolerances());

// pi(tau_H) for every tau_H.
TrajectoryLaw policy_weights(const Policy& policy, Exec exec = Exec::Parallel);

// max_i sum_tau w_i(tau) |a(tau) - b(tau)|
double max_weighted_abs_diff(const TrajectoryLaw& a, const TrajectoryLaw& b,
                             const std::vector<TrajectoryLaw>& weights, Exec exec = Exec::Parallel);

// Max over rows of sum_tau w_i(tau) |a - b|. The index is the lowest row
// within tie_tol of the max; the value is the exact max.
struct WeightedMax {
  double value = 0.0;
  std::size_t index = 0;
};
WeightedMax argmax_weighted_abs_diff(const TrajectoryLaw& a, const TrajectoryLaw& b,
                                     const std::vector<TrajectoryLaw>& weights,
                                     Exec exec = Exec::Parallel, double tie_tol = 1e-12);

// acc[j] += log(max(laws[j][traj_index], p_floor)) for every j.
void add_log_likelihood(const std::vector<const TrajectoryLaw*>& laws, std::size_t traj_index, double p_floor,
                        std::vector<double>& acc, Exec exec = Exec::Parallel);

// Elementwise a * b.
TrajectoryLaw hadamard(const TrajectoryLaw& a, const TrajectoryLaw& b);

// Policy weight rows for every member of a class, computed once.
class PolicyWeightTable {
 public:
  explicit PolicyWeightTable(const PolicyClass& policies, Exec exec = Exec::Parallel);
  std::size_t size() const { return rows_.size(); }
  const TrajectoryLaw& operator[](std::size_t i) const { return rows_[i]; }
  const std::vector<TrajectoryLaw>& rows() const { return rows_; }

 private:
  std::vector<TrajectoryLaw> rows_;
};

}  // namespace mtpsr
