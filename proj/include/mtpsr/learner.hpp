#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mtpsr/evaluation.hpp"
#include "mtpsr/kernels.hpp"
#include "mtpsr/model_class.hpp"
#include "mtpsr/policy.hpp"

namespace mtpsr {

// One collected trajectory, tagged with the exploration policy nu_h(pi, u)
// that produced it.
struct Sample {
  int task = 0;
  int k = 0;
  int h = 1;
  std::size_t prefix_policy = 0;  // index into the policy class
  std::size_t traj_index = 0;     // full-length trajectory index
};

struct ConfidenceSet {
  int k = 1;
  std::vector<std::size_t> members;  // ascending member indices
  std::vector<double> loglik;        // cumulative joint log-likelihood per member
};

// Per-task, per-pool-model cumulative log-likelihoods; member likelihoods are
// sums over tasks, always in task order.
class LikelihoodTable {
 public:
  LikelihoodTable(const JointModelClass& cls, double p_floor);
  void add(const Sample& s);
  double member_loglik(std::size_t member) const;
  double max_loglik() const;  // over the whole class

 private:
  const JointModelClass* cls_;
  double p_floor_;
  std::vector<const TrajectoryLaw*> laws_;
  std::vector<std::vector<double>> cum_;  // [task][pool]
};

// Caches max-over-policy TV per pool pair; the policy class is fixed per run.
class PlanCache {
 public:
  PlanCache(const JointModelClass& cls, const PolicyWeightTable& weights) : cls_(&cls), weights_(&weights) {}
  const WeightedMax& pair(std::size_t a, std::size_t b);

 private:
  const JointModelClass* cls_;
  const PolicyWeightTable* weights_;
  std::unordered_map<std::uint64_t, WeightedMax> cache_;
};

struct PlanResult {
  std::vector<std::size_t> policies;  // one per task
  double objective = 0.0;             // sum_n tv of the chosen pair under pi^n
  std::size_t first = 0;              // maximizing member pair
  std::size_t second = 0;
};

// argmax over pi and member pairs in the set of the pairwise additive
// distance. Pairs are the outer loop; each task's policy is optimized
// independently inside. Ties break to the earliest pair and lowest policy
// index (1e-12). Throws InvariantViolation on an empty set.
PlanResult plan_upstream(const JointModelClass& cls, const ConfidenceSet& conf, PlanCache& cache);
PlanResult plan_upstream(const JointModelClass& cls, const ConfidenceSet& conf, const PolicyClass& policies);

// One trajectory per (task, h) from P_{theta_n*}^{nu_h(pi^n, u_{A x Q_h^A})},
// each drawn from the substream keyed (seed, k, n, h).
std::vector<Sample> collect_upstream(const std::vector<const PsrModel*>& truth, const PolicyClass& policies,
                                     const std::vector<std::size_t>& policy_ids, int k, std::uint64_t seed,
                                     const Tolerances& tol = default_tolerances());

// B_{k+1} = B_k intersected with {theta : L(theta) >= max_{Theta_u} L - beta}.
// Throws InvariantViolation when nothing survives.
ConfidenceSet update_confidence(const ConfidenceSet& conf, const JointModelClass& cls, const LikelihoodTable& ll,
                                double beta);

struct TraceRecord {
  int k = 0;
  std::size_t set_size = 0;        // |B_k|
  std::size_t next_set_size = 0;   // |B_{k+1}|
  std::vector<std::size_t> policy_ids;
  std::vector<std::size_t> trajectory_ids;  // task-major, then h
  double plan_objective = 0.0;
  double max_loglik = 0.0;
  double margin = 0.0;
  std::optional<double> tv_metric;  // oracle: sum_n max_pi tv of the current estimate
  std::optional<bool> true_in_set;
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct LearnerOutput {
  std::size_t estimate = 0;                   // member index of theta-bar
  std::vector<std::size_t> greedy_policies;   // pi-bar, one per task
  std::vector<TraceRecord> trace;
  ConfidenceSet final_set;
  std::vector<Sample> data;
  double beta = 0.0;
};

struct UpstreamConfig {
  const JointModelClass* cls = nullptr;
  std::vector<const PsrModel*> truth;           // theta*, one per task
  std::optional<std::size_t> true_member;       // member index of theta* when known
  std::vector<RewardFunction> rewards;          // one per task
  const PolicyClass* policies = nullptr;
  int iterations = 10;                          // K
  double c1 = 1.0;
  double delta = 0.1;
  std::optional<double> beta;                   // overrides the default margin
  std::uint64_t seed = 0;
  bool oracle_tv = true;
  Tolerances tol = default_tolerances();
};

// c1 (log(K H N / delta) + log |Theta_u|)
double default_upstream_beta(const JointModelClass& cls, int iterations, double c1, double delta);

// Plan, collect, update for K iterations; theta-bar is the maximum-likelihood
// member of B_{K+1} (ties to the lowest index) and pi-bar the per-task value
// argmax under theta-bar.
LearnerOutput run_umt_psr(const UpstreamConfig& cfg);

// Per-task argmax_pi V_{theta, R}^pi with lowest-index ties (1e-12).
std::size_t greedy_policy(const TrajectoryLaw& dynamics, const RewardFunction& reward,
                          const PolicyWeightTable& weights);

// ---- downstream ----

// C(theta_0, theta-bar_1..N) <= 0 componentwise defines membership.
struct SimilarityConstraint {
  std::string name;
  std::function<std::vector<double>(const PsrModel&, const std::vector<const PsrModel*>&)> eval;
};

SimilarityConstraint zero_constraint();
// M_h^0 = M_h^b + Delta_h^0 for some per-step choice from the set, within tol.
SimilarityConstraint perturbed_of_base_constraint(std::shared_ptr<const PsrModel> base, PerturbationSet deltas,
                                                  double tol = 1e-9);
// theta_0 is a grid mixture of the upstream estimates, within tol.
SimilarityConstraint linear_span_constraint(std::vector<Vector> grid, double tol = 1e-9);
// sum_o M_h(o,a) of the candidate equals that of the first upstream estimate
// for every h < H, i.e. the recovered transition kernels agree.
SimilarityConstraint shared_transition_constraint(double tol = 1e-9);

// Indices of pool models satisfying C <= 0. Throws EmptyClassError when none do.
std::vector<std::size_t> filter_downstream(const std::vector<PsrModel>& pool,
                                           const std::vector<const PsrModel*>& upstream,
                                           const SimilarityConstraint& constraint);
std::vector<PsrModel> build_downstream_class(const std::vector<PsrModel>& pool,
                                             const std::vector<const PsrModel*>& upstream,
                                             const SimilarityConstraint& constraint);

struct ApproxError {
  double value = 0.0;          // +inf when every member is +inf
  std::size_t argmin = 0;
  bool all_infinite = false;
};

// min over the class of max over policies of renyi(alpha, P_{theta_0*}^pi, P_{theta_0}^pi).
ApproxError approx_error(const std::vector<PsrModel>& cls, const PsrModel& truth, double alpha,
                         const PolicyWeightTable& weights);

struct DownstreamConfig {
  std::vector<PsrModel> candidates;             // the filtered class
  const PsrModel* truth = nullptr;              // theta_0*
  std::optional<std::size_t> true_member;
  RewardFunction reward = RewardFunction::constant(ObsActionSpace(1, 1, 1), 0.0);
  const PolicyClass* policies = nullptr;
  int iterations = 10;
  double alpha = 2.0;
  double c0 = 1.0;
  double delta = 0.1;
  double epsilon0 = 0.0;                        // Renyi approximation error of the class
  std::optional<double> beta;
  std::uint64_t seed = 0;
  bool oracle_tv = true;
  Tolerances tol = default_tolerances();
};

// c0 (log|class| + eps0 K H + (1{eps0 != 0}/(alpha-1) + 1) log(K H / delta))
double default_downstream_beta(std::size_t class_size, int iterations, int horizon, double c0, double delta,
                               double alpha, double epsilon0);

// Single-task optimistic MLE over the candidate class; the same engine as the
// upstream learner with N = 1.
LearnerOutput run_omle(const DownstreamConfig& cfg);

// ---- metrics ----

struct MetricReport {
  double tv_error = 0.0;              // sum_n max_pi tv(P_{theta-bar_n}^pi, P_{theta_n*}^pi)
  double average_gap = 0.0;           // (1/N) sum_n (max_pi V* - V*(pi-bar_n))
  std::vector<double> task_tv;
  std::vector<double> task_gap;
};

MetricReport metrics(const std::vector<const PsrModel*>& estimate, const std::vector<std::size_t>& greedy,
                     const std::vector<const PsrModel*>& truth, const std::vector<RewardFunction>& rewards,
                     const PolicyWeightTable& weights);

// Both sides of the Hellinger / log-likelihood relation for one member:
// sum over collected samples of D_H^2(P_theta^nu, P_*^nu) against the summed
// log-ratio log(P_* / P_theta) plus beta.
struct HellingerLikelihood {
  double hellinger_sum = 0.0;
  double log_ratio_sum = 0.0;
};
HellingerLikelihood hellinger_likelihood(const JointModelClass& cls, std::size_t member,
                                         const std::vector<const PsrModel*>& truth, const PolicyClass& policies,
                                         const std::vector<Sample>& data, double p_floor = 1e-12);

}  // namespace mtpsr
