#include "mtpsr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

void check_unit_range(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ParameterError(std::string(what) + " outside [0,1]");
}

std::vector<Step> concat(std::span<const Step> a, std::span<const Step> b) {
  std::vector<Step> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

RewardFunction RewardFunction::dense(const ObsActionSpace& space, std::vector<double> table) {
  if (table.size() != space.trajectory_count()) throw ParameterError("dense reward needs one entry per trajectory");
  for (double v : table) check_unit_range(v, "reward");
  RewardFunction r(space, Kind::Dense);
  r.dense_ = std::move(table);
  return r;
}

RewardFunction RewardFunction::additive(const ObsActionSpace& space, std::vector<std::vector<double>> per_step) {
  if (per_step.size() != static_cast<std::size_t>(space.horizon())) {
    throw ParameterError("additive reward needs one table per step");
  }
  double lo = 0.0;
  double hi = 0.0;
  for (const auto& row : per_step) {
    if (row.size() != static_cast<std::size_t>(space.pairs())) {
      throw ParameterError("additive reward step table needs |O||A| entries");
    }
    lo += *std::min_element(row.begin(), row.end());
    hi += *std::max_element(row.begin(), row.end());
  }
  // the extremes are attained, so this is the exact range of the sum
  if (lo < 0.0 || hi > 1.0 + 1e-12) throw ParameterError("additive reward total outside [0,1]");
  RewardFunction r(space, Kind::Additive);
  r.per_step_ = std::move(per_step);
  return r;
}

RewardFunction RewardFunction::constant(const ObsActionSpace& space, double c) {
  check_unit_range(c, "reward");
  return dense(space, std::vector<double>(space.trajectory_count(), c));
}

double RewardFunction::at(std::size_t index) const {
  if (kind_ == Kind::Dense) return dense_.at(index);
  return (*this)(Trajectory::decode(space_, index, space_.horizon()));
}

double RewardFunction::operator()(const Trajectory& traj) const {
  if (traj.size() != static_cast<std::size_t>(space_.horizon())) {
    throw StructuralError("reward needs a full-length trajectory");
  }
  traj.check(space_);
  if (kind_ == Kind::Dense) return dense_[traj.encode(space_)];
  double total = 0.0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const Step& s = traj[t];
    total += per_step_[t][static_cast<std::size_t>(s.obs * space_.num_actions() + s.action)];
  }
  return std::clamp(total, 0.0, 1.0);
}

std::vector<double> RewardFunction::table() const {
  if (kind_ == Kind::Dense) return dense_;
  std::vector<double> out(space_.trajectory_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

double policy_trajectory_prob(const PsrModel& model, const Policy& policy, const Trajectory& traj) {
  if (!(policy.space() == model.space())) throw StructuralError("policy and model spaces differ");
  return trajectory_dynamics_prob(model, traj) * policy.prob(traj);
}

TrajectoryLaw trajectory_law(const PsrModel& model, const Policy& policy, Exec exec) {
  if (!(policy.space() == model.space())) throw StructuralError("policy and model spaces differ");
  return hadamard(dynamics_law(model, exec), policy_weights(policy, exec));
}

double value_from_law(const TrajectoryLaw& dynamics, const std::vector<double>& reward_table,
                      const TrajectoryLaw& policy_weight) {
  if (dynamics.size() != reward_table.size() || dynamics.size() != policy_weight.size()) {
    throw StructuralError("value inputs have different index spaces");
  }
  double v = 0.0;
  for (std::size_t i = 0; i < dynamics.size(); ++i) v += dynamics[i] * policy_weight[i] * reward_table[i];
  return v;
}

double value_from_law(const TrajectoryLaw& dynamics, const RewardFunction& reward, const Policy& policy) {
  return value_from_law(dynamics, reward.table(), policy_weights(policy));
}

double value(const PsrModel& model, const RewardFunction& reward, const Policy& policy, std::uint64_t budget) {
  if (model.space().trajectory_count() > budget) throw BudgetError("value enumeration exceeds the budget");
  if (!(reward.space() == model.space())) throw StructuralError("reward and model spaces differ");
  return value_from_law(dynamics_law(model), reward, policy);
}

Trajectory sample_trajectory(const PsrModel& model, const Policy& policy, RngStream& rng, const Tolerances& tol) {
  const ObsActionSpace& space = model.space();
  const int H = model.horizon();
  const int O = space.num_obs();
  Trajectory traj;
  Vector psi = model.psi0();
  std::vector<double> cond(static_cast<std::size_t>(O));
  for (int h = 1; h <= H; ++h) {
    const double mass = model.phi(h - 1).dot(psi);
    if (!(mass > 0.0)) throw ModelIntegrityError("sampling reached a zero-probability history");
    double total = 0.0;
    for (int o = 0; o < O; ++o) {
      // any completing action gives the same law for a self-consistent model
      const double p = model.phi(h).dot(model.op(h, o, 0) * psi) / mass;
      if (p < tol.clamp) throw ModelIntegrityError("conditional observation law has a negative entry");
      cond[static_cast<std::size_t>(o)] = std::max(p, 0.0);
      total += cond[static_cast<std::size_t>(o)];
    }
    if (std::abs(total - 1.0) > tol.sampling) {
      throw ModelIntegrityError("conditional observation law sums to " + std::to_string(total));
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    int obs = O - 1;
    for (int o = 0; o < O; ++o) {
      acc += cond[static_cast<std::size_t>(o)];
      if (u < acc) {
        obs = o;
        break;
      }
    }
    while (obs > 0 && cond[static_cast<std::size_t>(obs)] == 0.0) --obs;
    const int action = policy.sample_action(traj.steps(), obs, rng);
    traj.push_back({obs, action});
    psi = model.op(h, obs, action) * psi;
  }
  return traj;
}

double conditional_policy_prob(const Policy& policy, std::span<const Step> history, std::span<const Step> future) {
  const std::vector<Step> full = concat(history, future);
  const std::span<const Step> all(full);
  double p = 1.0;
  for (std::size_t t = history.size(); t < full.size() && p != 0.0; ++t) {
    p *= policy.action_prob(all.subspan(0, t), full[t].obs, full[t].action);
  }
  return p;
}

GammaCheck check_gamma_condition(const PsrModel& model, const PolicyClass& policies, double gamma,
                                 std::uint64_t budget) {
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
  const ObsActionSpace& space = model.space();
  const int H = model.horizon();
  std::uint64_t ops = 0;
  for (int h = 0; h < H; ++h) {
    ops += static_cast<std::uint64_t>(space.prefix_count(h)) * space.prefix_count(H - h) * policies.size();
    if (ops > budget) throw BudgetError("gamma check enumeration exceeds the budget");
  }

  GammaCheck best;
  bool first = true;
  for (int h = 0; h < H; ++h) {
    const std::size_t n_hist = space.prefix_count(h);
    const std::size_t n_fut = space.prefix_count(H - h);
    const int d = model.dim(h);
    std::vector<Trajectory> futures;
    Matrix m(static_cast<Eigen::Index>(n_fut), d);
    for (std::size_t j = 0; j < n_fut; ++j) {
      futures.push_back(Trajectory::decode(space, j, H - h));
      m.row(static_cast<Eigen::Index>(j)) = future_vector(model, h, futures.back().steps()).transpose();
    }
    for (std::size_t pi = 0; pi < policies.size(); ++pi) {
      for (std::size_t hi = 0; hi < n_hist; ++hi) {
        const Trajectory hist = Trajectory::decode(space, hi, h);
        std::vector<double> w(n_fut);
        for (std::size_t j = 0; j < n_fut; ++j) {
          w[j] = conditional_policy_prob(policies[pi], hist.steps(), futures[j].steps());
        }
        for (int l = 0; l < d; ++l) {
          for (int sign : {1, -1}) {
            double s = 0.0;
            for (std::size_t j = 0; j < n_fut; ++j) {
              s += w[j] * std::abs(sign * m(static_cast<Eigen::Index>(j), l));
            }
            if (first || s > best.achieved) {
              first = false;
              best.achieved = s;
              best.h = h;
              best.basis = l;
              best.sign = sign;
              best.policy = pi;
              best.history = hi;
            }
          }
        }
      }
    }
  }
  best.best_gamma = best.achieved > 0.0 ? 1.0 / best.achieved : INFINITY;
  best.holds = best.achieved <= 1.0 / gamma + 1e-9;
  return best;
}

double estimation_error_bound(const PsrModel& model, const PsrModel& other, const Policy& policy) {
  const ObsActionSpace& space = model.space();
  if (!(other.space() == space)) throw StructuralError("models live on different spaces");
  if (other.dims() != model.dims()) throw StructuralError("models have different feature dimensions");
  const int H = model.horizon();
  double total = 0.0;
  for (std::size_t idx = 0; idx < space.trajectory_count(); ++idx) {
    const Trajectory t = Trajectory::decode(space, idx, H);
    const double w = policy.prob(t);
    if (w == 0.0) continue;
    double s = 0.0;
    Vector psi = model.psi0();
    for (int h = 1; h <= H; ++h) {
      const Step& st = t[static_cast<std::size_t>(h - 1)];
      const Vector m = future_vector(other, h, std::span<const Step>(t.steps()).subspan(static_cast<std::size_t>(h)));
      const Matrix diff = other.op(h, st.obs, st.action) - model.op(h, st.obs, st.action);
      s += std::abs(m.dot(diff * psi));
      psi = model.op(h, st.obs, st.action) * psi;
    }
    // end-vector mismatch; zero when both share phi_H
    s += std::abs((other.phi_end() - model.phi_end()).dot(psi));
    total += s * w;
  }
  return total;
}

}  // namespace mtpsr
