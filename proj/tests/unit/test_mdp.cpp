#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rlab/mdp.hpp"
#include "rlab/tabular.hpp"

using namespace rlab;

namespace {

// s0 --(single action, r=1)--> s1 (terminal)
FiniteMdp two_state_chain() {
  FiniteMdp m(2, 1);
  m.p(0, 0, 1) = 1.0;
  m.r(0, 0) = 1.0;
  m.make_terminal(1);
  return m;
}

FiniteMdp random_mdp(std::size_t states, std::size_t actions, Rng& rng) {
  FiniteMdp m(states, actions);
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t a = 0; a < actions; ++a) {
      double total = 0.0;
      for (std::size_t n = 0; n < states; ++n) total += (m.p(s, a, n) = rng.uniform() + 0.01);
      for (std::size_t n = 0; n < states; ++n) m.p(s, a, n) /= total;
      m.r(s, a) = rng.uniform(-1.0, 1.0);
    }
  }
  return m;
}

}  // namespace

TEST_SUITE("mdp") {

TEST_CASE("discounted return examples") {
  CHECK(discounted_return(std::vector<double>{1, 1, 1}, 0.5) == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(discounted_return(std::vector<double>{}, 0.99) == 0.0);
  CHECK(discounted_return(std::vector<double>{0.1, 0.1, -1}, 0.99) == doctest::Approx(-0.7811).epsilon(1e-12));
}

TEST_CASE("discounted return recursion holds exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(1 + rng.index(20));
    for (double& x : r) x = rng.uniform(-2.0, 2.0);
    const double gamma = rng.uniform();
    const std::vector<double> rest(r.begin() + 1, r.end());
    CHECK(discounted_return(r, gamma) == r[0] + gamma * discounted_return(rest, gamma));
  }
}

TEST_CASE("argmax breaks ties at the lowest index") {
  CHECK(argmax(std::vector<double>{5, 5}) == 0);
  CHECK(argmax(std::vector<double>{1, 3, 3}) == 1);
}

TEST_CASE("epsilon-greedy frequencies") {
  Rng rng(3);
  SUBCASE("greedy limit") {
    for (int i = 0; i < 1000; ++i) CHECK(epsilon_greedy_select(std::vector<double>{0.2, 0.9}, 0.0, rng) == 1);
  }
  SUBCASE("q=[3,1,2], eps=0.3") {
    std::vector<int> counts(3);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[epsilon_greedy_select(std::vector<double>{3, 1, 2}, 0.3, rng)];
    CHECK(std::abs(counts[0] / double(n) - 0.8) < 0.01);
    CHECK(std::abs(counts[1] / double(n) - 0.1) < 0.01);
    CHECK(std::abs(counts[2] / double(n) - 0.1) < 0.01);
  }
  SUBCASE("q=[0.2,0.9], eps=0.1") {
    int ones = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) ones += epsilon_greedy_select(std::vector<double>{0.2, 0.9}, 0.1, rng) == 1;
    CHECK(std::abs(ones / double(n) - 0.95) < 0.01);
  }
  SUBCASE("eps=1 is uniform") {
    std::vector<int> counts(4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[epsilon_greedy_select(std::vector<double>{9, 1, 2, 3}, 1.0, rng)];
    for (int c : counts) CHECK(std::abs(c / double(n) - 0.25) < 0.01);
  }
  SUBCASE("empty row is rejected") { CHECK_THROWS(epsilon_greedy_select(std::vector<double>{}, 0.1, rng)); }
}

TEST_CASE("epsilon schedule is linear then flat") {
  const EpsilonSchedule s{0.1, 1e-4, 1000};
  CHECK(s.at(0) == doctest::Approx(0.1));
  CHECK(s.at(500) == doctest::Approx(0.1 + 0.5 * (1e-4 - 0.1)));
  CHECK(s.at(1000) == doctest::Approx(1e-4));
  CHECK(s.at(1000000) == doctest::Approx(1e-4));
  CHECK_THROWS_AS((EpsilonSchedule{0.1, 0.2, 10}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((EpsilonSchedule{0.1, 0.0, 0}.validate()), std::invalid_argument);
}

TEST_CASE("value iteration examples") {
  const auto v = value_iteration(two_state_chain(), 0.9);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == 0.0);

  FiniteMdp single(1, 1);
  single.make_terminal(0);
  CHECK(value_iteration(single, 0.9)[0] == 0.0);

  const GridWorld world = GridWorld::cliff_walking();
  const auto vc = value_iteration(gridworld_mdp(world), 1.0);
  CHECK(vc[world.index(world.start)] == doctest::Approx(-13.0));
}

TEST_CASE("value iteration hits its sweep cap on a non-terminating undiscounted MDP") {
  FiniteMdp loop(1, 1);
  loop.p(0, 0, 0) = 1.0;
  loop.r(0, 0) = 1.0;
  CHECK_THROWS_AS(value_iteration(loop, 1.0, {1e-8, 100}), std::runtime_error);
}

TEST_CASE("value iteration sweeps contract for gamma < 1") {
  Rng rng(5);
  const FiniteMdp m = random_mdp(6, 3, rng);
  ValueTable v(6, 0.0);
  double previous = 1e300;
  for (int sweep = 0; sweep < 60; ++sweep) {
    QTable q = q_from_values(m, v, 0.9);
    ValueTable next(6);
    for (std::size_t s = 0; s < 6; ++s) next[s] = q.row(s)[argmax(q.row(s))];
    const double d = sup_norm_distance(next, v);
    CHECK(d <= previous + 1e-15);
    previous = d;
    v = next;
  }
}

TEST_CASE("q optimality backup examples") {
  FiniteMdp zero(3, 2);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 2; ++a) zero.p(s, a, (s + a) % 3) = 1.0;
  const QTable q0(3, 2);
  CHECK(q_optimality_backup(zero, q0, 0.9) == q0);

  const QTable qc = q_optimality_backup(two_state_chain(), QTable(2, 1), 0.9);
  CHECK(qc(0, 0) == 1.0);

  const GridWorld world = GridWorld::cliff_walking();
  const FiniteMdp grid = gridworld_mdp(world);
  const QTable qstar = q_value_iteration(grid, 1.0);
  const auto start = world.index(world.start);
  CHECK(qstar.row(start)[argmax(qstar.row(start))] == doctest::Approx(value_iteration(grid, 1.0)[start]));
}

TEST_CASE("greedy policy from q") {
  QTable a(1, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  const auto pa = greedy_policy_from_q(a);
  CHECK(pa(0, 0) == 0.0);
  CHECK(pa(0, 1) == 1.0);
  QTable b(1, 2);
  b(0, 0) = 5;
  b(0, 1) = 5;
  const auto pb = greedy_policy_from_q(b);
  CHECK(pb(0, 0) == 1.0);
  CHECK(pb(0, 1) == 0.0);

  SUBCASE("invariant to a constant shift of a row") {
    Rng rng(2);
    QTable q(5, 4);
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t k = 0; k < 4; ++k) q(s, k) = std::round(rng.uniform(-3, 3));
    QTable shifted = q;
    for (std::size_t s = 0; s < 5; ++s)
      for (std::size_t k = 0; k < 4; ++k) shifted(s, k) += 0.5 * static_cast<double>(s);
    CHECK(greedy_policy_from_q(q) == greedy_policy_from_q(shifted));
  }

  SUBCASE("cliff-walking greedy rollout of q* takes the 13-step edge path") {
    GridWorldEnv env(GridWorld::cliff_walking());
    const QTable qstar = q_value_iteration(gridworld_mdp(env.world()), 1.0);
    Rng rng(0);
    const Rollout path = greedy_rollout(env, qstar, rng);
    CHECK(path.length() == 13);
    CHECK(path.total_return == -13.0);
    for (std::size_t s : path.states) {
      const Cell c = env.world().cell(s);
      if (c != env.world().start && c != env.world().goal) CHECK(c.row == env.world().rows - 2);
    }
  }
}

TEST_CASE("policy evaluation consistency v = sum pi q") {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const FiniteMdp m = random_mdp(5, 3, rng);
    QTable pi(5, 3);
    for (std::size_t s = 0; s < 5; ++s) {
      double total = 0.0;
      for (std::size_t a = 0; a < 3; ++a) total += (pi(s, a) = rng.uniform());
      for (std::size_t a = 0; a < 3; ++a) pi(s, a) /= total;
    }
    const auto v = policy_evaluation(m, pi, 0.9, {1e-13, 100000});
    const QTable q = q_from_values(m, v, 0.9);
    for (std::size_t s = 0; s < 5; ++s) {
      double expected = 0.0;
      for (std::size_t a = 0; a < 3; ++a) expected += pi(s, a) * q(s, a);
      CHECK(std::abs(v[s] - expected) < 1e-9);
    }
  }
}

TEST_CASE("FiniteMdp validation") {
  FiniteMdp bad(2, 1);
  bad.p(0, 0, 0) = 0.5;
  bad.p(1, 0, 1) = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_NOTHROW(two_state_chain().validate());
}

}
