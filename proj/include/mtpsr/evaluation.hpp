#pragma once

#include <cstdint>
#include <vector>

#include "mtpsr/kernels.hpp"
#include "mtpsr/policy.hpp"
#include "mtpsr/psr_model.hpp"
#include "mtpsr/rng.hpp"

namespace mtpsr {

// R: (O x A)^H -> [0,1], either a dense table indexed by trajectory index or
// an additive per-step table r_h(o,a) with sum_h r_h in [0,1].
class RewardFunction {
 public:
  enum class Kind { Dense, Additive };

  // Throws ParameterError on size mismatch or values outside [0,1].
  static RewardFunction dense(const ObsActionSpace& space, std::vector<double> table);
  // per_step[h-1][o*|A|+a]; every achievable total must lie in [0,1].
  static RewardFunction additive(const ObsActionSpace& space, std::vector<std::vector<double>> per_step);
  static RewardFunction constant(const ObsActionSpace& space, double c);

  Kind kind() const { return kind_; }
  const ObsActionSpace& space() const { return space_; }
  double operator()(const Trajectory& traj) const;
  double at(std::size_t index) const;
  // Dense view over every trajectory index.
  std::vector<double> table() const;
  const std::vector<std::vector<double>>& per_step() const { return per_step_; }

 private:
  RewardFunction(ObsActionSpace space, Kind kind) : space_(space), kind_(kind) {}
  ObsActionSpace space_;
  Kind kind_;
  std::vector<double> dense_;
  std::vector<std::vector<double>> per_step_;
};

// P_theta(tau_H) * pi(tau_H)
double policy_trajectory_prob(const PsrModel& model, const Policy& policy, const Trajectory& traj);

// The full law P_theta^pi over every tau_H.
TrajectoryLaw trajectory_law(const PsrModel& model, const Policy& policy, Exec exec = Exec::Parallel);

// E_{tau ~ P^pi}[R(tau)] by full enumeration. Throws BudgetError when the
// trajectory space exceeds `budget`.
double value(const PsrModel& model, const RewardFunction& reward, const Policy& policy,
             std::uint64_t budget = kDefaultEnumerationCap);

// Same, reusing a precomputed dynamics law.
double value_from_law(const TrajectoryLaw& dynamics, const RewardFunction& reward, const Policy& policy);
double value_from_law(const TrajectoryLaw& dynamics, const std::vector<double>& reward_table,
                      const TrajectoryLaw& policy_weight);

// Draws tau_H from P_theta^pi: o_h from P(.|tau_{h-1}), then a_h from the
// policy. Throws ModelIntegrityError when a conditional law fails to sum to 1
// within tol.sampling or has a negative entry below tol.clamp.
Trajectory sample_trajectory(const PsrModel& model, const Policy& policy, RngStream& rng,
                             const Tolerances& tol = default_tolerances());

struct GammaCheck {
  bool holds = false;
  double achieved = 0.0;        // max over (h, x, pi, tau_h) of the weighted l1 sum
  double best_gamma = 0.0;      // 1 / achieved
  int h = 0;                    // witness step
  int basis = 0;                // witness coordinate of x
  int sign = 1;                 // witness sign of x
  std::size_t policy = 0;       // witness index into the class
  std::size_t history = 0;      // witness tau_h index
};

// Assumption-style conditioning check over h = 0..H-1. The l1 ball is searched
// at its vertices (signed basis vectors) and pi(omega_h | tau_h) is maximized
// over every history tau_h. Throws BudgetError when the enumeration exceeds
// `budget` operations.
GammaCheck check_gamma_condition(const PsrModel& model, const PolicyClass& policies, double gamma,
                                 std::uint64_t budget = kDefaultEnumerationCap);

// pi(omega | tau_h): product of the policy's action probabilities over the
// future steps, conditioned on the history.
double conditional_policy_prob(const Policy& policy, std::span<const Step> history,
                               std::span<const Step> future);

// sum_h sum_tau |m'(omega_h)^T (M'_h - M_h) psi(tau_{h-1})| pi(tau_H), with m'
// from `other` and psi from `model`; upper-bounds tv(P_other^pi, P_model^pi)
// when both share psi_0.
double estimation_error_bound(const PsrModel& model, const PsrModel& other, const Policy& policy);

}  // namespace mtpsr
