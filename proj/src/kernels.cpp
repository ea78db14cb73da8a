#include "mtpsr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <omp.h>

#include "mtpsr/error.hpp"

namespace mtpsr {

namespace {

// Fills out[begin, end) by a depth-first walk; only the suffix of the operator
// product that differs from the previous leaf is recomputed.
void walk_range(const PsrModel& model, std::size_t begin, std::size_t end, std::vector<double>& raw) {
  const ObsActionSpace& space = model.space();
  const int H = model.horizon();
  const int A = space.num_actions();
  const auto base = static_cast<std::size_t>(space.pairs());
  std::vector<Vector> stack(static_cast<std::size_t>(H + 1));
  stack[0] = model.psi0();
  std::vector<std::size_t> digits(static_cast<std::size_t>(H), 0);
  std::vector<std::size_t> prev(static_cast<std::size_t>(H), 0);
  for (std::size_t idx = begin; idx < end; ++idx) {
    std::size_t rest = idx;
    for (int t = H - 1; t >= 0; --t) {
      digits[static_cast<std::size_t>(t)] = rest % base;
      rest /= base;
    }
    int first = 0;
    if (idx != begin) {
      while (first < H && digits[static_cast<std::size_t>(first)] == prev[static_cast<std::size_t>(first)]) ++first;
    }
    for (int t = first; t < H; ++t) {
      const auto d = static_cast<int>(digits[static_cast<std::size_t>(t)]);
      stack[static_cast<std::size_t>(t + 1)] = model.op(t + 1, d / A, d % A) * stack[static_cast<std::size_t>(t)];
    }
    raw[idx] = model.phi_end().dot(stack[static_cast<std::size_t>(H)]);
    prev.swap(digits);
  }
}

}  // namespace

TrajectoryLaw dynamics_law(const PsrModel& model, Exec exec, const Tolerances& tol) {
  const ObsActionSpace& space = model.space();
  const std::size_t total = space.trajectory_count();
  TrajectoryLaw raw(total, 0.0);

  if (exec == Exec::Serial) {
    for (std::size_t idx = 0; idx < total; ++idx) {
      raw[idx] = raw_dynamics_prob(model, Trajectory::decode(space, idx, model.horizon()).steps());
    }
  } else {
    const std::size_t blocks =
        std::min<std::size_t>(total, std::max<std::size_t>(1, static_cast<std::size_t>(omp_get_max_threads()) * 4));
    const std::size_t chunk = (total + blocks - 1) / blocks;
#pragma omp parallel for schedule(static)
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t begin = b * chunk;
      const std::size_t end = std::min(total, begin + chunk);
      if (begin < end) walk_range(model, begin, end, raw);
    }
  }

  double worst = 0.0;
  for (double p : raw) worst = std::min(worst, p);
  if (worst < tol.clamp) {
    throw ModelIntegrityError("operator product is negative (" + std::to_string(worst) + ")");
  }
  for (double& p : raw) p = std::clamp(p, 0.0, 1.0);
  return raw;
}

TrajectoryLaw policy_weights(const Policy& policy, Exec exec) {
  const ObsActionSpace& space = policy.space();
  const std::size_t total = space.trajectory_count();
  const int H = space.horizon();
  TrajectoryLaw w(total, 0.0);
  if (exec == Exec::Serial) {
    for (std::size_t idx = 0; idx < total; ++idx) w[idx] = policy.prob(Trajectory::decode(space, idx, H));
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t idx = 0; idx < total; ++idx) w[idx] = policy.prob(Trajectory::decode(space, idx, H));
  }
  return w;
}

WeightedMax argmax_weighted_abs_diff(const TrajectoryLaw& a, const TrajectoryLaw& b,
                                     const std::vector<TrajectoryLaw>& weights, Exec exec, double tie_tol) {
  if (a.size() != b.size()) throw StructuralError("laws have different index spaces");
  std::vector<double> sums(weights.size(), 0.0);
  const auto row_sum = [&](std::size_t i) {
    const TrajectoryLaw& w = weights[i];
    if (w.size() != a.size()) throw StructuralError("policy weights have a different index space");
    double s = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) s += w[t] * std::abs(a[t] - b[t]);
    return s;
  };
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < weights.size(); ++i) sums[i] = row_sum(i);
  } else {
    // size mismatches are checked up front so no exception escapes the region
    for (const TrajectoryLaw& w : weights) {
      if (w.size() != a.size()) throw StructuralError("policy weights have a different index space");
    }
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < weights.size(); ++i) sums[i] = row_sum(i);
  }
  WeightedMax best;
  if (sums.empty()) return best;
  best.value = *std::max_element(sums.begin(), sums.end());
  while (sums[best.index] < best.value - tie_tol) ++best.index;
  return best;
}

double max_weighted_abs_diff(const TrajectoryLaw& a, const TrajectoryLaw& b,
                             const std::vector<TrajectoryLaw>& weights, Exec exec) {
  return argmax_weighted_abs_diff(a, b, weights, exec).value;
}

void add_log_likelihood(const std::vector<const TrajectoryLaw*>& laws, std::size_t traj_index, double p_floor,
                        std::vector<double>& acc, Exec exec) {
  if (acc.size() != laws.size()) throw StructuralError("accumulator must match the law list");
  for (const TrajectoryLaw* l : laws) {
    if (traj_index >= l->size()) throw StructuralError("trajectory index out of range");
  }
  const std::size_t n = laws.size();
  if (exec == Exec::Serial) {
    for (std::size_t j = 0; j < n; ++j) acc[j] += std::log(std::max((*laws[j])[traj_index], p_floor));
  } else {
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < n; ++j) acc[j] += std::log(std::max((*laws[j])[traj_index], p_floor));
  }
}

TrajectoryLaw hadamard(const TrajectoryLaw& a, const TrajectoryLaw& b) {
  if (a.size() != b.size()) throw StructuralError("laws have different index spaces");
  TrajectoryLaw out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

PolicyWeightTable::PolicyWeightTable(const PolicyClass& policies, Exec exec) {
  rows_.reserve(policies.size());
  for (const Policy& p : policies.policies()) rows_.push_back(policy_weights(p, exec));
}

}  // namespace mtpsr
