#include <doctest.h>

#include <cmath>
#include <limits>

#include "mtpsr/divergence.hpp"
#include "mtpsr/error.hpp"
#include "mtpsr/evaluation.hpp"
#include "mtpsr/pomdp.hpp"
#include "oracles.hpp"

using namespace mtpsr;

namespace {

std::vector<double> random_law(RngStream& rng, int n, double mass = 1.0) {
  std::vector<double> p(static_cast<std::size_t>(n));
  double s = 0.0;
  for (double& x : p) s += (x = rng.uniform() + 1e-3);
  for (double& x : p) x *= mass / s;
  return p;
}

std::vector<double> law_of(const PsrModel& m, const Policy& pi) {
  std::vector<double> out(m.space().trajectory_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = policy_trajectory_prob(m, pi, Trajectory::decode(m.space(), i, m.horizon()));
  }
  return out;
}

}  // namespace

TEST_SUITE("divergence") {
  TEST_CASE("total variation keeps the un-halved sum") {
    const std::vector<double> p{0.5, 0.5}, q{0.8, 0.2};
    CHECK(tv(p, p) == 0.0);
    CHECK(tv(p, q) == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(tv(q, p) == tv(p, q));
    CHECK(tv({1.0, 0.0}, {0.0, 1.0}) == 2.0);
    CHECK(tv({0.3, 0.0}, {0.0, 0.5}) == doctest::Approx(0.8));
  }

  TEST_CASE("squared Hellinger") {
    const std::vector<double> p{0.5, 0.5}, q{0.8, 0.2};
    CHECK(hellinger_sq(p, p) == 0.0);
    CHECK(hellinger_sq({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
    CHECK(std::abs(hellinger_sq(p, q) - (1.0 - (std::sqrt(0.40) + std::sqrt(0.10)))) < 1e-12);
  }

  TEST_CASE("Renyi divergence") {
    const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
    CHECK(renyi(2.0, p, p) == doctest::Approx(0.0));
    CHECK(std::abs(renyi(2.0, p, q) - std::log(4.0 / 3.0)) < 1e-12);
    // Second summation: E_q[(p/q)^2].
    double s = 0.0;
    for (std::size_t i = 0; i < 2; ++i) s += q[i] * (p[i] / q[i]) * (p[i] / q[i]);
    CHECK(std::abs(renyi(2.0, p, q) - std::log(s)) < 1e-12);
    CHECK(std::isinf(renyi(2.0, {0.5, 0.5}, {1.0, 0.0})));
    CHECK(renyi(3.0, {1.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(renyi(1.0, p, q), ParameterError);
    CHECK_THROWS_AS(renyi(0.5, p, q), ParameterError);
  }

  TEST_CASE("KL divergence") {
    CHECK(kl({0.2, 0.8}, {0.2, 0.8}) == 0.0);
    CHECK(std::abs(kl({1.0, 0.0}, {0.5, 0.5}) - std::log(2.0)) < 1e-15);
    CHECK(std::isinf(kl({0.5, 0.5}, {1.0, 0.0})));
    RngStream rng(77);
    for (int i = 0; i < 100; ++i) {
      const auto p = random_law(rng, 6);
      const auto q = random_law(rng, 6);
      const double k = kl(p, q);
      for (double alpha : {1.5, 2.0, 4.0}) CHECK(k <= renyi(alpha, p, q) + 1e-12);
      // Pinsker with the paper's doubled TV.
      CHECK(std::pow(tv(p, q) / 2.0, 2) <= k / 2.0 + 1e-12);
    }
  }

  TEST_CASE("property checks on random laws") {
    RngStream rng(5);
    for (int i = 0; i < 200; ++i) {
      const auto p = random_law(rng, 8);
      const auto q = random_law(rng, 8);
      const auto r = random_law(rng, 8);
      CHECK(tv(p, r) <= tv(p, q) + tv(q, r) + 1e-12);
      const double h = hellinger_sq(p, q);
      CHECK(h >= 0.0);
      CHECK(h <= 1.0);
      CHECK(renyi(1.5, p, q) <= renyi(2.0, p, q) + 1e-12);
      CHECK(renyi(2.0, p, q) <= renyi(5.0, p, q) + 1e-12);

      const double mp = 2.0 * rng.uniform() + 1e-3;
      const double mq = 2.0 * rng.uniform() + 1e-3;
      const auto bp = random_law(rng, 8, std::min(mp, 2.0));
      const auto bq = random_law(rng, 8, std::min(mq, 2.0));
      const double t = tv(bp, bq);
      CHECK(t * t <= 4.0 * (std::min(mp, 2.0) + std::min(mq, 2.0)) * hellinger_sq(bp, bq) + 1e-12);
    }
  }

  TEST_CASE("pairwise additive distance") {
    const PsrModel a = pomdp_to_psr(oracle::random_pomdp(1, 2, 2, 2, 2));
    const PsrModel b = pomdp_to_psr(oracle::random_pomdp(2, 2, 2, 2, 2));
    const Policy p0 = reactive_from_index(a.space(), 3);
    const Policy p1 = reactive_from_index(a.space(), 12);
    CHECK(pairwise_additive({&a, &b}, {&a, &b}, {&p0, &p1}) == 0.0);
    CHECK(pairwise_additive({&a}, {&b}, {&p0}) == doctest::Approx(tv(law_of(a, p0), law_of(b, p0))));
    CHECK(pairwise_additive({&a, &b}, {&b, &b}, {&p1, &p0}) == doctest::Approx(tv(law_of(a, p1), law_of(b, p1))));
    CHECK(pairwise_additive({&a, &b}, {&b, &a}, {&p0, &p1}) ==
          doctest::Approx(oracle::sum_abs_diff(law_of(a, p0), law_of(b, p0)) +
                          oracle::sum_abs_diff(law_of(b, p1), law_of(a, p1))));
    CHECK_THROWS(pairwise_additive({&a, &b}, {&a}, {&p0, &p1}));
  }

  TEST_CASE("policy-weighted sup norm") {
    const ObsActionSpace space(2, 2, 2);
    const PolicyClass cls = enumerate_reactive(space);
    const PsrModel a = pomdp_to_psr(oracle::random_pomdp(11, 2, 2, 2, 2));
    const PsrModel b = pomdp_to_psr(oracle::random_pomdp(12, 2, 2, 2, 2));
    const PolicyWeightTable w(cls);
    std::vector<TrajectoryLaw> l{dynamics_law(a), dynamics_law(b)};
    std::vector<TrajectoryLaw> g{dynamics_law(b), dynamics_law(b)};
    CHECK(policy_weighted_linf(l, l, w) == 0.0);

    double best = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      for (const Policy& pi : cls.policies()) {
        double s = 0.0;
        for (std::size_t t = 0; t < space.trajectory_count(); ++t) {
          s += std::abs(l[i][t] - g[i][t]) * pi.prob(Trajectory::decode(space, t, 2));
        }
        best = std::max(best, s);
      }
    }
    CHECK(policy_weighted_linf(l, g, w) == doctest::Approx(best).epsilon(1e-14));
    CHECK(policy_weighted_linf(l, g, cls) == doctest::Approx(best).epsilon(1e-14));
    const PolicyClass sub({cls[0], cls[7]}, "subset");
    CHECK(policy_weighted_linf(l, g, sub) <= best + 1e-15);

    // A constant gap c on every trajectory weighs in at c times |O|^H.
    std::vector<TrajectoryLaw> shifted{l[0]};
    for (double& x : shifted[0]) x += 0.01;
    CHECK(policy_weighted_linf({l[0]}, shifted, w) == doctest::Approx(0.01 * 4));
    CHECK_THROWS_AS(policy_weighted_linf(l, g, cls, 10), BudgetError);
  }

  TEST_CASE("elliptical potential") {
    const auto xs = random_low_rank_sequence(6, 2, 300, 9);
    CHECK(xs.size() == 300);
    Eigen::MatrixXd stack(6, 300);
    for (int k = 0; k < 300; ++k) {
      CHECK(xs[static_cast<std::size_t>(k)].norm() <= 1.0 + 1e-12);
      stack.col(k) = xs[static_cast<std::size_t>(k)];
    }
    CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(stack).rank() == 2);

    // Direct computation restricted to the first 40 vectors.
    const double lambda = 1.0, cap = 1.0;
    std::vector<Vector> head(xs.begin(), xs.begin() + 40);
    Eigen::MatrixXd u = lambda * Eigen::MatrixXd::Identity(6, 6);
    double lhs = 0.0;
    for (const Vector& x : head) {
      lhs += std::min(x.dot(u.ldlt().solve(x)), cap);
      u += x * x.transpose();
    }
    const auto r = elliptical_potential(head, 2, lambda, cap);
    CHECK(r.lhs == doctest::Approx(lhs).epsilon(1e-10));
    CHECK(r.rhs == doctest::Approx(2.0 * 2.0 * std::log(1.0 + 40.0)));
    CHECK(r.holds());
  }
}
