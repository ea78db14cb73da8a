#include "mtpsr/learner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtpsr/divergence.hpp"
#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

constexpr double kTieTol = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t best_member(const ConfidenceSet& conf) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < conf.members.size(); ++i) {
    if (conf.loglik[i] > conf.loglik[best]) best = i;
  }
  return conf.members[best];
}

double oracle_tv(const JointModelClass& cls, std::size_t member, const std::vector<TrajectoryLaw>& truth_laws,
                 const PolicyWeightTable& weights) {
  double s = 0.0;
  for (int n = 0; n < cls.n_tasks(); ++n) {
    s += max_weighted_abs_diff(cls.pool_law(cls.pool_index(member, n)), truth_laws[static_cast<std::size_t>(n)],
                               weights.rows());
  }
  return s;
}

struct EngineInputs {
  const JointModelClass* cls;
  std::vector<const PsrModel*> truth;
  std::optional<std::size_t> true_member;
  const std::vector<RewardFunction>* rewards;
  const PolicyClass* policies;
  int iterations;
  double beta;
  std::uint64_t seed;
  bool oracle;
  Tolerances tol;
};

LearnerOutput run_engine(const EngineInputs& in) {
  const JointModelClass& cls = *in.cls;
  const int N = cls.n_tasks();
  if (in.truth.size() != static_cast<std::size_t>(N)) throw ParameterError("need one true model per task");
  if (in.rewards->size() != static_cast<std::size_t>(N)) throw ParameterError("need one reward per task");
  if (in.iterations < 0) throw ParameterError("iteration count must be nonnegative");
  if (!(in.beta >= 0.0)) throw ParameterError("margin beta must be nonnegative");
  for (const PsrModel* m : in.truth) {
    if (!m || !(m->space() == cls.space())) throw StructuralError("true model space differs from the class");
  }
  if (!(in.policies->space() == cls.space())) throw StructuralError("policy class space differs from the class");

  const PolicyWeightTable weights(*in.policies);
  PlanCache cache(cls, weights);
  std::vector<TrajectoryLaw> truth_laws;
  if (in.oracle) {
    for (const PsrModel* m : in.truth) truth_laws.push_back(dynamics_law(*m));
  }
  LikelihoodTable ll(cls, in.tol.p_floor);

  LearnerOutput out;
  out.beta = in.beta;
  ConfidenceSet conf;
  conf.k = 1;
  for (std::size_t i = 0; i < cls.size(); ++i) conf.members.push_back(i);
  conf.loglik.assign(cls.size(), 0.0);

  for (int k = 1; k <= in.iterations; ++k) {
    TraceRecord rec;
    rec.k = k;
    rec.set_size = conf.members.size();
    const PlanResult plan = plan_upstream(cls, conf, cache);
    rec.policy_ids = plan.policies;
    rec.plan_objective = plan.objective;
    const std::vector<Sample> samples = collect_upstream(in.truth, *in.policies, plan.policies, k, in.seed, in.tol);
    for (const Sample& s : samples) {
      ll.add(s);
      rec.trajectory_ids.push_back(s.traj_index);
      out.data.push_back(s);
    }
    conf = update_confidence(conf, cls, ll, in.beta);
    rec.next_set_size = conf.members.size();
    rec.max_loglik = ll.max_loglik();
    rec.margin = in.beta;
    if (in.oracle) rec.tv_metric = oracle_tv(cls, best_member(conf), truth_laws, weights);
    if (in.true_member) {
      rec.true_in_set = std::binary_search(conf.members.begin(), conf.members.end(), *in.true_member);
    }
    out.trace.push_back(std::move(rec));
  }

  out.estimate = best_member(conf);
  for (int n = 0; n < N; ++n) {
    out.greedy_policies.push_back(greedy_policy(cls.pool_law(cls.pool_index(out.estimate, n)),
                                                (*in.rewards)[static_cast<std::size_t>(n)], weights));
  }
  out.final_set = std::move(conf);
  return out;
}

}  // namespace

LikelihoodTable::LikelihoodTable(const JointModelClass& cls, double p_floor)
    : cls_(&cls), p_floor_(p_floor), cum_(static_cast<std::size_t>(cls.n_tasks()), std::vector<double>(cls.pool_size(), 0.0)) {
  for (std::size_t j = 0; j < cls.pool_size(); ++j) laws_.push_back(&cls.pool_law(j));
}

void LikelihoodTable::add(const Sample& s) {
  if (s.task < 0 || s.task >= cls_->n_tasks()) throw StructuralError("sample task out of range");
  add_log_likelihood(laws_, s.traj_index, p_floor_, cum_[static_cast<std::size_t>(s.task)]);
}

double LikelihoodTable::member_loglik(std::size_t member) const {
  double s = 0.0;
  for (int n = 0; n < cls_->n_tasks(); ++n) s += cum_[static_cast<std::size_t>(n)][cls_->pool_index(member, n)];
  return s;
}

double LikelihoodTable::max_loglik() const {
  double best = -kInf;
  for (std::size_t i = 0; i < cls_->size(); ++i) best = std::max(best, member_loglik(i));
  return best;
}

const WeightedMax& PlanCache::pair(std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  const std::uint64_t key = static_cast<std::uint64_t>(a) * cls_->pool_size() + b;
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, argmax_weighted_abs_diff(cls_->pool_law(a), cls_->pool_law(b), weights_->rows(),
                                                      Exec::Parallel, kTieTol))
             .first;
  }
  return it->second;
}

PlanResult plan_upstream(const JointModelClass& cls, const ConfidenceSet& conf, PlanCache& cache) {
  if (conf.members.empty()) throw InvariantViolation("planning over an empty confidence set");
  const int N = cls.n_tasks();
  PlanResult best;
  best.policies.assign(static_cast<std::size_t>(N), 0);
  best.first = best.second = conf.members.front();
  for (std::size_t x = 0; x < conf.members.size(); ++x) {
    for (std::size_t y = x + 1; y < conf.members.size(); ++y) {
      const std::size_t a = conf.members[x];
      const std::size_t b = conf.members[y];
      double objective = 0.0;
      std::vector<std::size_t> pols(static_cast<std::size_t>(N));
      for (int n = 0; n < N; ++n) {
        const WeightedMax& wm = cache.pair(cls.pool_index(a, n), cls.pool_index(b, n));
        objective += wm.value;
        pols[static_cast<std::size_t>(n)] = wm.index;
      }
      if (objective > best.objective + kTieTol) {
        best.objective = objective;
        best.policies = std::move(pols);
        best.first = a;
        best.second = b;
      }
    }
  }
  return best;
}

PlanResult plan_upstream(const JointModelClass& cls, const ConfidenceSet& conf, const PolicyClass& policies) {
  const PolicyWeightTable weights(policies);
  PlanCache cache(cls, weights);
  return plan_upstream(cls, conf, cache);
}

std::vector<Sample> collect_upstream(const std::vector<const PsrModel*>& truth, const PolicyClass& policies,
                                     const std::vector<std::size_t>& policy_ids, int k, std::uint64_t seed,
                                     const Tolerances& tol) {
  if (truth.size() != policy_ids.size()) throw ParameterError("need one policy per task");
  std::vector<Sample> out;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    const PsrModel& model = *truth[n];
    const auto prefix = std::make_shared<const Policy>(policies[policy_ids[n]]);
    for (int h = 1; h <= model.horizon(); ++h) {
      const Policy nu = compose_nu(prefix, h, model.core_action_seqs(h));
      RngStream rng(seed, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(h)});
      const Trajectory t = sample_trajectory(model, nu, rng, tol);
      out.push_back({static_cast<int>(n), k, h, policy_ids[n], t.encode(model.space())});
    }
  }
  return out;
}

ConfidenceSet update_confidence(const ConfidenceSet& conf, const JointModelClass& cls, const LikelihoodTable& ll,
                                double beta) {
  const double threshold = ll.max_loglik() - beta;
  ConfidenceSet next;
  next.k = conf.k + 1;
  for (std::size_t m : conf.members) {
    const double l = ll.member_loglik(m);
    if (l >= threshold) {
      next.members.push_back(m);
      next.loglik.push_back(l);
    }
  }
  if (next.members.empty()) {
    throw InvariantViolation("elimination of all members: the margin beta is too small for this class");
  }
  (void)cls;
  return next;
}

double default_upstream_beta(const JointModelClass& cls, int iterations, double c1, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0,1)");
  const double khn = static_cast<double>(std::max(iterations, 1)) * cls.space().horizon() * cls.n_tasks();
  return c1 * (std::log(khn / delta) + std::log(static_cast<double>(cls.size())));
}

LearnerOutput run_umt_psr(const UpstreamConfig& cfg) {
  if (!cfg.cls || !cfg.policies) throw ParameterError("upstream config needs a class and a policy class");
  EngineInputs in{cfg.cls,
                  cfg.truth,
                  cfg.true_member,
                  &cfg.rewards,
                  cfg.policies,
                  cfg.iterations,
                  cfg.beta ? *cfg.beta : default_upstream_beta(*cfg.cls, cfg.iterations, cfg.c1, cfg.delta),
                  cfg.seed,
                  cfg.oracle_tv,
                  cfg.tol};
  return run_engine(in);
}

std::size_t greedy_policy(const TrajectoryLaw& dynamics, const RewardFunction& reward, const PolicyWeightTable& weights) {
  const std::vector<double> table = reward.table();
  std::vector<double> values(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) values[i] = value_from_law(dynamics, table, weights[i]);
  const double best = *std::max_element(values.begin(), values.end());
  std::size_t idx = 0;
  while (values[idx] < best - kTieTol) ++idx;
  return idx;
}

SimilarityConstraint zero_constraint() {
  return {"zero", [](const PsrModel&, const std::vector<const PsrModel*>&) { return std::vector<double>{0.0}; }};
}

SimilarityConstraint perturbed_of_base_constraint(std::shared_ptr<const PsrModel> base, PerturbationSet deltas,
                                                  double tol) {
  if (!base) throw ParameterError("perturbed constraint needs a base model");
  if (deltas.size() == 0) throw ParameterError("perturbed constraint needs a non-empty perturbation set");
  return {"perturbed-of-base",
          [base, deltas = std::move(deltas), tol](const PsrModel& cand, const std::vector<const PsrModel*>&) {
            if (cand.dims() != base->dims() || !(cand.space() == base->space())) return std::vector<double>{kInf};
            double worst = (cand.phi_end() - base->phi_end()).cwiseAbs().maxCoeff();
            worst = std::max(worst, (cand.psi0() - base->psi0()).cwiseAbs().maxCoeff());
            for (int h = 1; h <= base->horizon(); ++h) {
              double best_step = kInf;
              for (const auto& e : deltas.elements) {
                const auto& step = e[static_cast<std::size_t>(h - 1)];
                double err = 0.0;
                for (std::size_t i = 0; i < step.size(); ++i) {
                  const Matrix& m = cand.ops()[static_cast<std::size_t>(h - 1)][i];
                  const Matrix& b = base->ops()[static_cast<std::size_t>(h - 1)][i];
                  err = std::max(err, (m - b - step[i]).cwiseAbs().maxCoeff());
                }
                best_step = std::min(best_step, err);
              }
              worst = std::max(worst, best_step);
            }
            return std::vector<double>{worst - tol};
          }};
}

SimilarityConstraint linear_span_constraint(std::vector<Vector> grid, double tol) {
  return {"linear-span-of-upstream",
          [grid = std::move(grid), tol](const PsrModel& cand, const std::vector<const PsrModel*>& upstream) {
            double best = kInf;
            for (const Vector& alpha : grid) {
              if (alpha.size() != static_cast<Eigen::Index>(upstream.size())) {
                throw ParameterError("grid dimension must equal the number of upstream tasks");
              }
              const PsrModel mix = mix_models(upstream, alpha);
              if (mix.dims() != cand.dims()) continue;
              double err = (mix.phi_end() - cand.phi_end()).cwiseAbs().maxCoeff();
              err = std::max(err, (mix.psi0() - cand.psi0()).cwiseAbs().maxCoeff());
              for (std::size_t h = 0; h < mix.ops().size(); ++h) {
                for (std::size_t i = 0; i < mix.ops()[h].size(); ++i) {
                  err = std::max(err, (mix.ops()[h][i] - cand.ops()[h][i]).cwiseAbs().maxCoeff());
                }
              }
              best = std::min(best, err);
            }
            return std::vector<double>{best - tol};
          }};
}

SimilarityConstraint shared_transition_constraint(double tol) {
  return {"shared-transition", [tol](const PsrModel& cand, const std::vector<const PsrModel*>& upstream) {
            if (upstream.empty()) throw ParameterError("shared-transition constraint needs an upstream estimate");
            const PsrModel& ref = *upstream.front();
            if (ref.dims() != cand.dims() || !(ref.space() == cand.space())) return std::vector<double>{kInf};
            const ObsActionSpace& space = cand.space();
            double worst = 0.0;
            for (int h = 1; h < cand.horizon(); ++h) {
              for (int a = 0; a < space.num_actions(); ++a) {
                Matrix tc = Matrix::Zero(cand.dim(h), cand.dim(h - 1));
                Matrix tr = tc;
                for (int o = 0; o < space.num_obs(); ++o) {
                  tc += cand.op(h, o, a);
                  tr += ref.op(h, o, a);
                }
                worst = std::max(worst, (tc - tr).cwiseAbs().maxCoeff());
              }
            }
            return std::vector<double>{worst - tol};
          }};
}

std::vector<std::size_t> filter_downstream(const std::vector<PsrModel>& pool, const std::vector<const PsrModel*>& upstream,
                                           const SimilarityConstraint& constraint) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::vector<double> c = constraint.eval(pool[i], upstream);
    if (std::all_of(c.begin(), c.end(), [](double v) { return v <= 0.0; })) kept.push_back(i);
  }
  if (kept.empty()) throw EmptyClassError("similarity constraint '" + constraint.name + "' leaves no candidate");
  return kept;
}

std::vector<PsrModel> build_downstream_class(const std::vector<PsrModel>& pool, const std::vector<const PsrModel*>& upstream,
                                             const SimilarityConstraint& constraint) {
  std::vector<PsrModel> out;
  for (std::size_t i : filter_downstream(pool, upstream, constraint)) out.push_back(pool[i]);
  return out;
}

ApproxError approx_error(const std::vector<PsrModel>& cls, const PsrModel& truth, double alpha,
                         const PolicyWeightTable& weights) {
  if (!(alpha > 1.0)) throw ParameterError("Renyi order must exceed 1");
  if (cls.empty()) throw EmptyClassError("approximation error of an empty class");
  const TrajectoryLaw star = dynamics_law(truth);
  ApproxError out;
  out.value = kInf;
  out.all_infinite = true;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    const TrajectoryLaw cand = dynamics_law(cls[i]);
    double worst = 0.0;
    for (const TrajectoryLaw& w : weights.rows()) {
      worst = std::max(worst, renyi(alpha, hadamard(star, w), hadamard(cand, w)));
      if (std::isinf(worst)) break;
    }
    if (std::isinf(worst)) continue;
    if (out.all_infinite || worst < out.value) {
      out.value = worst;
      out.argmin = i;
      out.all_infinite = false;
    }
  }
  return out;
}

double default_downstream_beta(std::size_t class_size, int iterations, int horizon, double c0, double delta,
                               double alpha, double epsilon0) {
  if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0,1)");
  if (!(alpha > 1.0)) throw ParameterError("Renyi order must exceed 1");
  if (!(epsilon0 >= 0.0) || std::isinf(epsilon0)) throw ParameterError("approximation error must be finite and >= 0");
  const double kh = static_cast<double>(std::max(iterations, 1)) * horizon;
  const double indicator = epsilon0 != 0.0 ? 1.0 : 0.0;
  return c0 * (std::log(static_cast<double>(class_size)) + epsilon0 * kh +
               (indicator / (alpha - 1.0) + 1.0) * std::log(kh / delta));
}

LearnerOutput run_omle(const DownstreamConfig& cfg) {
  if (!cfg.truth || !cfg.policies) throw ParameterError("downstream config needs a true model and a policy class");
  if (cfg.candidates.empty()) throw EmptyClassError("downstream class is empty");
  std::vector<std::vector<PsrModel>> tuples;
  for (const PsrModel& m : cfg.candidates) tuples.push_back({m});
  const JointModelClass cls = build_explicit(tuples);
  const std::vector<RewardFunction> rewards{cfg.reward};
  const double beta = cfg.beta ? *cfg.beta
                               : default_downstream_beta(cls.size(), cfg.iterations, cls.space().horizon(), cfg.c0,
                                                         cfg.delta, cfg.alpha, cfg.epsilon0);
  EngineInputs in{&cls, {cfg.truth}, cfg.true_member, &rewards, cfg.policies, cfg.iterations, beta, cfg.seed,
                  cfg.oracle_tv, cfg.tol};
  return run_engine(in);
}

MetricReport metrics(const std::vector<const PsrModel*>& estimate, const std::vector<std::size_t>& greedy,
                     const std::vector<const PsrModel*>& truth, const std::vector<RewardFunction>& rewards,
                     const PolicyWeightTable& weights) {
  const std::size_t N = truth.size();
  if (estimate.size() != N || greedy.size() != N || rewards.size() != N) {
    throw ParameterError("metric inputs need one entry per task");
  }
  MetricReport r;
  for (std::size_t n = 0; n < N; ++n) {
    const TrajectoryLaw est = dynamics_law(*estimate[n]);
    const TrajectoryLaw star = dynamics_law(*truth[n]);
    const double t = max_weighted_abs_diff(est, star, weights.rows());
    const std::vector<double> table = rewards[n].table();
    double best = -kInf;
    for (std::size_t i = 0; i < weights.size(); ++i) best = std::max(best, value_from_law(star, table, weights[i]));
    const double gap = std::max(0.0, best - value_from_law(star, table, weights[greedy[n]]));
    r.task_tv.push_back(t);
    r.task_gap.push_back(gap);
    r.tv_error += t;
    r.average_gap += gap;
  }
  r.average_gap /= static_cast<double>(N);
  return r;
}

HellingerLikelihood hellinger_likelihood(const JointModelClass& cls, std::size_t member,
                                         const std::vector<const PsrModel*>& truth, const PolicyClass& policies,
                                         const std::vector<Sample>& data, double p_floor) {
  HellingerLikelihood out;
  std::vector<TrajectoryLaw> star;
  for (const PsrModel* m : truth) star.push_back(dynamics_law(*m));
  for (const Sample& s : data) {
    const auto n = static_cast<std::size_t>(s.task);
    const PsrModel& tm = *truth[n];
    const Policy nu = compose_nu(std::make_shared<const Policy>(policies[s.prefix_policy]), s.h, tm.core_action_seqs(s.h));
    const TrajectoryLaw w = policy_weights(nu);
    const TrajectoryLaw& cand = cls.pool_law(cls.pool_index(member, s.task));
    out.hellinger_sum += hellinger_sq(hadamard(cand, w), hadamard(star[n], w));
    out.log_ratio_sum += std::log(std::max(star[n][s.traj_index], p_floor)) -
                         std::log(std::max(cand[s.traj_index], p_floor));
  }
  return out;
}

}  // namespace mtpsr
