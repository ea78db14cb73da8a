#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "mtpsr/space.hpp"
#include "mtpsr/tolerances.hpp"

namespace mtpsr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Action sequence of a core test (length H-h for a test at step h).
using ActionSeq = std::vector<int>;

// Raw operator parameterization of one task. ops[h-1][o*|A|+a] holds M_h(o,a)
// with shape dims[h] x dims[h-1]; core_tests[h] holds futures of length H-h.
struct PsrParams {
  ObsActionSpace space;
  std::vector<int> dims;
  Vector psi0;
  std::vector<std::vector<Matrix>> ops;
  Vector phi_end;
  std::vector<std::vector<Trajectory>> core_tests;  // empty -> default
  double gamma = 1.0;
  int declared_rank = 0;                            // 0 -> computed
};

// Immutable PSR. The end vectors phi_h for h < H are derived from phi_H by
// phi_{h-1}^T = (1/|A|) sum_{o,a} phi_h^T M_h(o,a); for a self-consistent
// model this equals sum_o phi_h^T M_h(o,a) for every single action a.
class PsrModel {
 public:
  // Throws StructuralError on any shape mismatch. Semantic validity
  // (normalization, self-consistency) is reported by validate_model().
  explicit PsrModel(PsrParams params);

  const ObsActionSpace& space() const { return params_.space; }
  int horizon() const { return params_.space.horizon(); }
  const std::vector<int>& dims() const { return params_.dims; }
  int dim(int h) const { return params_.dims[static_cast<std::size_t>(h)]; }
  const Vector& psi0() const { return params_.psi0; }
  const Vector& phi_end() const { return params_.phi_end; }
  // h in [0, H]
  const Vector& phi(int h) const { return phis_[static_cast<std::size_t>(h)]; }
  // h in [1, H]
  const Matrix& op(int h, int obs, int action) const {
    return params_.ops[static_cast<std::size_t>(h - 1)]
                      [static_cast<std::size_t>(obs * space().num_actions() + action)];
  }
  const std::vector<std::vector<Matrix>>& ops() const { return params_.ops; }
  double gamma() const { return params_.gamma; }
  int declared_rank() const { return params_.declared_rank; }

  const std::vector<Trajectory>& core_tests(int h) const {
    return params_.core_tests[static_cast<std::size_t>(h)];
  }
  // Deduplicated, order-preserving action sequences of core_tests(h).
  const std::vector<ActionSeq>& core_action_seqs(int h) const {
    return core_action_seqs_[static_cast<std::size_t>(h)];
  }
  // max over h in [1,H] of |Q_h^A|
  std::size_t max_core_action_count() const;

  const PsrParams& params() const { return params_; }

 private:
  PsrParams params_;
  std::vector<Vector> phis_;
  std::vector<std::vector<ActionSeq>> core_action_seqs_;
};

// Leading `count` futures of length H-h in index order, for h = 0..H.
std::vector<std::vector<Trajectory>> default_core_tests(const ObsActionSpace& space,
                                                        const std::vector<int>& dims);

std::vector<ActionSeq> dedup_action_seqs(const std::vector<Trajectory>& tests);

// Max rank over h of the history-by-future dynamics matrices.
int dynamics_rank(const PsrModel& model, double tol = 1e-9);

struct ModelValidation {
  double self_consistency_error = 0.0;  // max |sum_o phi_h^T M_h(o,a) - phi_{h-1}^T|
  double total_mass_error = 0.0;        // |phi_0^T psi_0 - 1|
  double normalization_error = 0.0;     // max over open-loop action sequences
  double min_probability = 0.0;         // most negative raw trajectory probability
  bool ok(const Tolerances& tol = default_tolerances()) const {
    return self_consistency_error <= tol.structural && total_mass_error <= tol.normalization &&
           normalization_error <= tol.normalization && min_probability >= tol.clamp;
  }
};

ModelValidation validate_model(const PsrModel& model);

// psi(tau_h) = M_h(o_h,a_h) ... M_1(o_1,a_1) psi_0
Vector prediction_feature(const PsrModel& model, std::span<const Step> traj);
inline Vector prediction_feature(const PsrModel& model, const Trajectory& traj) {
  return prediction_feature(model, traj.steps());
}

// m(omega_h) = (phi_H^T M_H ... M_{h+1})^T for a future starting after step h.
Vector future_vector(const PsrModel& model, int h, std::span<const Step> future);

// Operator product without clamping (may be slightly negative).
double raw_dynamics_prob(const PsrModel& model, std::span<const Step> traj);

// P(tau_H^o | tau_H^a), clamped to [0,1]. Throws ModelIntegrityError if the
// raw product is below the clamp threshold.
double trajectory_dynamics_prob(const PsrModel& model, const Trajectory& traj,
                                const Tolerances& tol = default_tolerances());

// m(q)^T psi(tau_h) for each core test q in Q_h: the joint probability of the
// test's observations and tau_h's observations given both action sequences.
std::vector<double> core_test_predictions(const PsrModel& model, const Trajectory& traj);

// psi(tau_h) / (phi_h^T psi(tau_h)); throws DegenerateHistoryError when the
// history has (numerically) zero probability.
Vector normalized_feature(const PsrModel& model, const Trajectory& traj);

// P(o_h = obs | tau_{h-1}); throws DegenerateHistoryError on zero-probability
// histories.
double conditional_obs_prob(const PsrModel& model, const Trajectory& hist, int obs);

}  // namespace mtpsr
