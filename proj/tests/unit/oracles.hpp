#pragma once

// Reference computations written out directly, used to check library output.

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "mtpsr/pomdp.hpp"
#include "mtpsr/psr_model.hpp"
#include "mtpsr/rng.hpp"

namespace oracle {

using namespace mtpsr;

// Sum over hidden state paths of mu0(s1) prod O_h(o_h|s_h) prod T_h(s_{h+1}|s_h,a_h).
inline double path_sum(const TabularPomdp& p, const std::vector<Step>& t) {
  const int S = p.num_states();
  const int H = static_cast<int>(t.size());
  if (H == 0) return 1.0;
  std::vector<int> path(static_cast<std::size_t>(H), 0);
  double total = 0.0;
  while (true) {
    double w = p.init()(path[0]);
    for (int h = 1; h <= H; ++h) {
      const auto i = static_cast<std::size_t>(h - 1);
      w *= p.emissions().at(h)(t[i].obs, path[i]);
      if (h < H) w *= p.transitions().at(h, t[i].action)(path[i + 1], path[i]);
    }
    total += w;
    int i = H - 1;
    while (i >= 0 && ++path[static_cast<std::size_t>(i)] == S) path[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
  }
  return total;
}

inline std::vector<Step> decode(const ObsActionSpace& space, std::size_t index, int len) {
  std::vector<Step> out(static_cast<std::size_t>(len));
  const auto pairs = static_cast<std::size_t>(space.pairs());
  for (int i = len - 1; i >= 0; --i) {
    const auto d = static_cast<int>(index % pairs);
    index /= pairs;
    out[static_cast<std::size_t>(i)] = {d / space.num_actions(), d % space.num_actions()};
  }
  return out;
}

inline std::size_t count(const ObsActionSpace& space, int len) {
  std::size_t n = 1;
  for (int i = 0; i < len; ++i) n *= static_cast<std::size_t>(space.pairs());
  return n;
}

// phi_H^T M_H ... M_1 psi_0 by explicit loop over steps.
inline double operator_prob(const PsrModel& m, const std::vector<Step>& steps) {
  Vector v = m.psi0();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    v = m.op(static_cast<int>(i) + 1, steps[i].obs, steps[i].action) * v;
  }
  return m.phi_end().dot(v);
}

inline TabularPomdp random_pomdp(std::uint64_t seed, int S, int O, int A, int H, double sharpness = 1.0) {
  RngStream rng(seed);
  const ObsActionSpace space(O, A, H);
  auto t = random_transitions(space, S, rng, sharpness);
  auto e = random_emissions(space, S, rng, sharpness);
  Vector mu = random_distribution(S, rng, sharpness);
  return TabularPomdp(space, S, std::move(t), std::move(e), std::move(mu));
}

// Single-state POMDP with the same emission column at every step.
inline TabularPomdp one_state(const ObsActionSpace& space, const std::vector<double>& emission) {
  auto t = std::make_shared<TransitionKernel>();
  for (int h = 1; h < space.horizon(); ++h) {
    t->by_step.emplace_back(static_cast<std::size_t>(space.num_actions()), Matrix::Ones(1, 1));
  }
  auto e = std::make_shared<EmissionModel>();
  Matrix col(space.num_obs(), 1);
  for (int o = 0; o < space.num_obs(); ++o) col(o, 0) = emission[static_cast<std::size_t>(o)];
  for (int h = 1; h <= space.horizon(); ++h) e->by_step.push_back(col);
  return TabularPomdp(space, 1, std::move(t), std::move(e), Vector::Ones(1));
}

// Deterministic chain: state advances s -> (s + a) mod S, identity emissions.
inline TabularPomdp deterministic_chain(int S, int A, int H) {
  const ObsActionSpace space(S, A, H);
  auto t = std::make_shared<TransitionKernel>();
  for (int h = 1; h < H; ++h) {
    std::vector<Matrix> per;
    for (int a = 0; a < A; ++a) {
      Matrix m = Matrix::Zero(S, S);
      for (int s = 0; s < S; ++s) m((s + a) % S, s) = 1.0;
      per.push_back(m);
    }
    t->by_step.push_back(per);
  }
  auto e = std::make_shared<EmissionModel>();
  for (int h = 1; h <= H; ++h) e->by_step.push_back(Matrix::Identity(S, S));
  Vector mu = Vector::Zero(S);
  mu(0) = 1.0;
  return TabularPomdp(space, S, std::move(t), std::move(e), mu);
}

// Scalar PSR with every operator equal to `value`.
inline PsrModel scalar_model(const ObsActionSpace& space, double value) {
  PsrParams p;
  p.space = space;
  p.dims.assign(static_cast<std::size_t>(space.horizon() + 1), 1);
  p.psi0 = Vector::Ones(1);
  p.phi_end = Vector::Ones(1);
  for (int h = 1; h <= space.horizon(); ++h) {
    p.ops.emplace_back(static_cast<std::size_t>(space.pairs()), Matrix::Constant(1, 1, value));
  }
  return PsrModel(std::move(p));
}

inline double sum_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

}  // namespace oracle
