#include <doctest.h>

#include <cmath>
#include <memory>

#include "mtpsr/error.hpp"
#include "mtpsr/evaluation.hpp"
#include "mtpsr/policy.hpp"
#include "mtpsr/pomdp.hpp"
#include "mtpsr/serialization.hpp"
#include "oracles.hpp"

using namespace mtpsr;

TEST_SUITE("policy") {
  TEST_CASE("deterministic policy probabilities") {
    const ObsActionSpace space(2, 2, 2);
    const Policy pi = Policy::reactive(space, {{1, 0}, {0, 1}});
    CHECK(pi.prob(Trajectory({{0, 1}, {1, 1}})) == 1.0);
    CHECK(pi.prob(Trajectory({{0, 1}, {1, 0}})) == 0.0);
    CHECK(pi.prob(Trajectory({{1, 1}, {0, 0}})) == 0.0);
    CHECK(pi.is_deterministic());
  }

  TEST_CASE("uniform policy gives 0.25 on every length-two trajectory") {
    const ObsActionSpace space(2, 2, 2);
    const Policy u = Policy::uniform(space);
    for (std::size_t i = 0; i < space.trajectory_count(); ++i) {
      CHECK(u.prob(Trajectory::decode(space, i, 2)) == doctest::Approx(0.25));
    }
    CHECK_FALSE(u.is_deterministic());
  }

  TEST_CASE("invalid policy tables are rejected") {
    const ObsActionSpace space(2, 2, 1);
    CHECK_THROWS_AS(Policy::reactive(space, {{0, 2}}), ParameterError);
    CHECK_THROWS_AS(Policy::history_table(space, {{0.5, 0.6, 1.0, 0.0}}), ParameterError);
    CHECK_THROWS_AS(Policy::open_loop(space, {0, 1}), ParameterError);
  }

  TEST_CASE("enumerated reactive classes") {
    CHECK(enumerate_reactive(ObsActionSpace(1, 2, 1)).size() == 2);
    const ObsActionSpace space(2, 2, 2);
    const PolicyClass cls = enumerate_reactive(space);
    CHECK(cls.size() == 16);
    CHECK(cls[5] == reactive_from_index(space, 5));
    CHECK(*cls[5].as_reactive() == ReactiveTable{{{0, 1}, {0, 1}}});
    CHECK_THROWS_AS(enumerate_reactive(ObsActionSpace(3, 3, 3), 1000), BudgetError);

    const PsrModel m = pomdp_to_psr(oracle::random_pomdp(13, 2, 2, 2, 2));
    for (const Policy& pi : cls.policies()) {
      double total = 0.0;
      for (std::size_t i = 0; i < space.trajectory_count(); ++i) {
        total += policy_trajectory_prob(m, pi, Trajectory::decode(space, i, 2));
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("policy classes drop duplicates and reject emptiness") {
    const ObsActionSpace space(2, 2, 1);
    const Policy a = reactive_from_index(space, 1);
    const PolicyClass cls({a, reactive_from_index(space, 2), a}, "test");
    CHECK(cls.size() == 2);
    CHECK(cls.descriptor() == "test");
    CHECK_THROWS_AS(PolicyClass({}, "empty"), ParameterError);
  }

  TEST_CASE("composed exploration policies") {
    const ObsActionSpace space(2, 2, 3);
    auto prefix = std::make_shared<const Policy>(Policy::reactive(space, {{1, 0}, {0, 0}, {1, 1}}));

    SUBCASE("h = 1 ignores the prefix") {
      const Policy nu = compose_nu(prefix, 1, {{0, 1}, {1, 1}});
      for (std::size_t i = 0; i < space.trajectory_count(); ++i) {
        const auto t = oracle::decode(space, i, 3);
        const int suffix_matches = (t[1].action == 0 && t[2].action == 1) + (t[1].action == 1 && t[2].action == 1);
        CHECK(nu.prob(t) == doctest::Approx(0.5 * 0.5 * suffix_matches));
      }
    }
    SUBCASE("h = H runs the prefix then one uniform action") {
      const Policy nu = compose_nu(prefix, 3, {{}});
      for (std::size_t i = 0; i < space.trajectory_count(); ++i) {
        const auto t = oracle::decode(space, i, 3);
        const double expected = prefix->prob(std::span<const Step>(t.data(), 2)) * 0.5;
        CHECK(nu.prob(t) == doctest::Approx(expected));
      }
    }
    SUBCASE("trajectory probability factorizes") {
      const std::vector<ActionSeq> core{{1}, {0}, {1}};
      const Policy nu = compose_nu(prefix, 2, core);
      for (std::size_t i = 0; i < space.trajectory_count(); ++i) {
        const auto t = oracle::decode(space, i, 3);
        double matches = 0.0;
        for (const auto& q : core) matches += q[0] == t[2].action ? 1.0 : 0.0;
        const double expected = prefix->prob(std::span<const Step>(t.data(), 1)) * 0.5 * matches / 3.0;
        CHECK(nu.prob(t) == doctest::Approx(expected));
      }
    }
    SUBCASE("single action and single core sequence stays deterministic") {
      const ObsActionSpace one(2, 1, 2);
      auto p = std::make_shared<const Policy>(Policy::reactive(one, {{0, 0}, {0, 0}}));
      CHECK(compose_nu(p, 1, {{0}}).is_deterministic());
    }
    SUBCASE("errors") {
      CHECK_THROWS_AS(compose_nu(prefix, 0, {{0, 0, 0}}), ParameterError);
      CHECK_THROWS_AS(compose_nu(prefix, 2, {}), ParameterError);
      CHECK_THROWS_AS(compose_nu(prefix, 2, {{0, 1}}), ParameterError);
    }
  }

  TEST_CASE("composed law matches sampling frequencies") {
    const PsrModel m = pomdp_to_psr(oracle::random_pomdp(31, 2, 2, 2, 3));
    auto prefix = std::make_shared<const Policy>(reactive_from_index(m.space(), 37));
    const Policy nu = compose_nu(prefix, 2, {{0}, {1}});
    std::vector<double> exact(m.space().trajectory_count()), freq(exact.size(), 0.0);
    for (std::size_t i = 0; i < exact.size(); ++i) {
      exact[i] = policy_trajectory_prob(m, nu, Trajectory::decode(m.space(), i, 3));
    }
    RngStream rng(2024);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) freq[sample_trajectory(m, nu, rng).encode(m.space())] += 1.0 / draws;
    CHECK(oracle::sum_abs_diff(exact, freq) <= 0.02);
  }

  TEST_CASE("policy documents round-trip") {
    const ObsActionSpace space(2, 2, 2);
    const PolicyClass cls = enumerate_reactive(space);
    const Policy r = cls[9];
    CHECK(policy_from_json(to_json(r), space) == r);
    const Policy ol = Policy::open_loop(space, {1, 0});
    CHECK(policy_from_json(to_json(ol), space) == ol);
    const Policy nu = compose_nu(std::make_shared<const Policy>(cls[3]), 1, {{1}});
    CHECK_THROWS_AS(to_json(nu), ParameterError);
    CHECK(policy_from_json(to_json(nu, &cls), space, &cls) == nu);
  }
}
