#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rlab/mdp.hpp"
#include "rlab/tabular.hpp"

using namespace rlab;

namespace {

FiniteMdp bandit(double reward) {
  FiniteMdp m(2, 1);
  m.p(0, 0, 1) = 1.0;
  m.r(0, 0) = reward;
  m.make_terminal(1);
  return m;
}

// Deterministic chain 0 -> 1 -> ... -> n-1 (terminal). Action 0 moves right
// with reward 1, action 1 stays with reward `stay`.
FiniteMdp chain(std::size_t n, double stay) {
  FiniteMdp m(n, 2);
  for (std::size_t s = 0; s + 1 < n; ++s) {
    m.p(s, 0, s + 1) = 1.0;
    m.r(s, 0) = 1.0;
    m.p(s, 1, s) = 1.0;
    m.r(s, 1) = stay;
  }
  m.make_terminal(n - 1);
  return m;
}

TdParams params(double alpha, double gamma, EpsilonSchedule eps, std::size_t episodes) {
  TdParams p;
  p.alpha = alpha;
  p.gamma = gamma;
  p.epsilon = eps;
  p.n_episodes = episodes;
  return p;
}

}  // namespace

TEST_SUITE("tabular") {

TEST_CASE("gridworld step rules") {
  const GridWorld w = GridWorld::cliff_walking();
  const GridStep into_cliff = gridworld_step(w, w.start, Move::right);
  CHECK(into_cliff.next == w.start);
  CHECK(into_cliff.reward == -100.0);
  CHECK_FALSE(into_cliff.terminal);

  const GridStep goal = gridworld_step(w, Cell{2, 11}, Move::down);
  CHECK(goal.next == w.goal);
  CHECK(goal.reward == -1.0);
  CHECK(goal.terminal);

  const GridStep corner = gridworld_step(w, Cell{0, 0}, Move::up);
  CHECK(corner.next == Cell{0, 0});
  CHECK(corner.reward == -1.0);
  CHECK_FALSE(corner.terminal);

  CHECK_THROWS_AS(gridworld_step(w, Cell{4, 0}, Move::up), std::invalid_argument);
  // Pure function.
  CHECK(gridworld_step(w, Cell{1, 5}, Move::left).next == gridworld_step(w, Cell{1, 5}, Move::left).next);
}

TEST_CASE("count-based step size") {
  TdParams p;
  p.alpha = 0.5;
  CHECK(p.alpha_at(0) == 0.5);
  CHECK(p.alpha_at(1000) == 0.5);
  p.alpha_visit_scale = 20.0;
  CHECK(p.alpha_at(0) == 0.5);
  CHECK(p.alpha_at(20) == 0.25);
  CHECK(p.alpha_at(60) == 0.125);
  p.alpha_visit_scale = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  // Alpha 1 with scale 1 gives 1/(n+1); the first update lands on the reward
  // and later ones keep it there.
  FiniteMdp m(2, 1);
  m.p(0, 0, 1) = 1.0;
  m.r(0, 0) = 2.0;
  m.make_terminal(1);
  MdpEnv env(m, 0);
  TdParams mean = params(1.0, 1.0, {0.0, 0.0, 1}, 7);
  mean.alpha_visit_scale = 1.0;
  std::vector<double> seen;
  Rng rng(1);
  q_learning_train(env, mean, rng, [&](const TdUpdate& u) { seen.push_back(u.new_value); });
  REQUIRE(seen.size() == 7);
  for (double v : seen) CHECK(v == 2.0);
}

TEST_CASE("sarsa single-step bandit") {
  MdpEnv env(bandit(1.0), 0);
  Rng rng(1);
  const QTable q = sarsa_train(env, params(0.5, 0.9, {0.1, 0.1, 1}, 1), rng);
  CHECK(q(0, 0) == 0.5);
}

TEST_CASE("zero rewards keep q at zero") {
  FiniteMdp m = chain(4, 0.0);
  for (std::size_t s = 0; s < 3; ++s) m.r(s, 0) = 0.0;
  MdpEnv env(m, 0);
  Rng rng(2);
  const QTable qs = sarsa_train(env, params(0.5, 0.9, {0.5, 0.5, 1}, 50), rng);
  const QTable ql = q_learning_train(env, params(0.5, 0.9, {0.5, 0.5, 1}, 50), rng);
  for (double x : qs.values()) CHECK(x == 0.0);
  for (double x : ql.values()) CHECK(x == 0.0);
}

TEST_CASE("q-learning two-state chain with alpha 1") {
  MdpEnv env(bandit(1.0), 0);
  Rng rng(3);
  const QTable q = q_learning_train(env, params(1.0, 0.9, {0.0, 0.0, 1}, 1), rng);
  CHECK(q(0, 0) == 1.0);
}

TEST_CASE("sarsa and q-learning agree step by step at epsilon 0") {
  MdpEnv env(chain(3, -0.5), 0);
  std::vector<TdUpdate> a, b;
  Rng r1(9), r2(9);
  const TdParams p = params(0.3, 0.9, {0.0, 0.0, 1}, 20);
  sarsa_train(env, p, r1, [&](const TdUpdate& u) { a.push_back(u); });
  q_learning_train(env, p, r2, [&](const TdUpdate& u) { b.push_back(u); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].state == b[i].state);
    CHECK(a[i].action == b[i].action);
    CHECK(a[i].target == b[i].target);
    CHECK(a[i].new_value == b[i].new_value);
  }
}

TEST_CASE("q-learning on a 5-state chain matches the backup fixed point") {
  const FiniteMdp m = chain(5, 0.2);
  MdpEnv env(m, 0);
  Rng rng(4);
  TdParams p = params(0.5, 0.9, {1.0, 0.01, 400}, 3000);
  p.max_steps = 200;
  const QTable q = q_learning_train(env, p, rng);
  const QTable qstar = q_value_iteration(m, 0.9);
  CHECK(sup_norm_distance(q.values(), qstar.values()) < 1e-3);
}

TEST_CASE("learners never write non-finite values") {
  GridWorldEnv env(GridWorld::cliff_walking());
  Rng rng(5);
  bool finite = true;
  auto watch = [&](const TdUpdate& u) { finite = finite && std::isfinite(u.new_value); };
  sarsa_train(env, params(1.0, 1.0, {0.2, 0.2, 1}, 200), rng, watch);
  q_learning_train(env, params(1.0, 1.0, {0.2, 0.2, 1}, 200), rng, watch);
  CHECK(finite);
}

TEST_CASE("monte carlo estimates") {
  // States: A = 0, B = 1.
  CHECK(mc_value_estimate({{{0}, {2.0}}}, 2, 1.0, VisitMode::first)[0].value() == 2.0);
  const auto two = mc_value_estimate({{{0}, {1.0}}, {{0}, {3.0}}}, 2, 1.0, VisitMode::every);
  CHECK(two[0].value() == 2.0);
  CHECK_FALSE(two[1].has_value());

  // A -> B -> A with rewards 2, 0, 2: returns from the A visits are 4 and 2.
  const Trajectory twice{{0, 1, 0}, {2.0, 0.0, 2.0}};
  CHECK(mc_value_estimate({twice}, 2, 1.0, VisitMode::every)[0].value() == 3.0);
  CHECK(mc_value_estimate({twice}, 2, 1.0, VisitMode::first)[0].value() == 4.0);

  Trajectory open{{0}, {1.0}};
  open.terminated = false;
  CHECK_THROWS_AS(mc_value_estimate({open}, 2, 1.0, VisitMode::first), std::invalid_argument);
}

TEST_CASE("every-visit monte carlo is unbiased on a stochastic MDP") {
  // From state 0: reward 1 then terminate w.p. 0.5, else move to state 1;
  // state 1 gives reward 2 and terminates. v(1) = 2, v(0) = 1 + 0.5 * 2 = 2.
  Rng rng(6);
  std::vector<Trajectory> episodes;
  for (int i = 0; i < 100000; ++i) {
    if (rng.uniform() < 0.5) {
      episodes.push_back({{0}, {1.0}});
    } else {
      episodes.push_back({{0, 1}, {1.0, 2.0}});
    }
  }
  const auto v = mc_value_estimate(episodes, 2, 1.0, VisitMode::every);
  CHECK(std::abs(v[0].value() - 2.0) < 0.05);
  CHECK(std::abs(v[1].value() - 2.0) < 0.05);
}

TEST_CASE("td(0) updates") {
  ValueTable v{0.0, 0.0};
  td0_value_update(v, 0, 1.0, 1, 0.5, 0.9, false);
  CHECK(v[0] == 0.5);
  CHECK(v[1] == 0.0);

  ValueTable fixed{2.0, 1.0};
  td0_value_update(fixed, 0, 1.1, 1, 0.5, 0.9, false);  // 1.1 + 0.9 * 1 = 2
  CHECK(fixed[0] == doctest::Approx(2.0).epsilon(1e-15));

  // Chain 0 -> 1 -> 2 (terminal) with rewards 1, 2: v = [1 + g*2, 2, 0].
  ValueTable chain_v{0.0, 0.0, 0.0};
  for (int sweep = 0; sweep < 2000; ++sweep) {
    td0_value_update(chain_v, 0, 1.0, 1, 0.1, 0.9, false);
    td0_value_update(chain_v, 1, 2.0, 2, 0.1, 0.9, true);
  }
  CHECK(std::abs(chain_v[1] - 2.0) < 1e-6);
  CHECK(std::abs(chain_v[0] - 2.8) < 1e-6);
  CHECK(chain_v[2] == 0.0);
}

TEST_CASE("render path marks start, goal and cliff") {
  GridWorldEnv env(GridWorld::cliff_walking());
  const QTable qstar = q_value_iteration(gridworld_mdp(env.world()), 1.0);
  Rng rng(0);
  const std::string grid = render_path(env.world(), greedy_rollout(env, qstar, rng));
  CHECK(grid.find('S') != std::string::npos);
  CHECK(grid.find('G') != std::string::npos);
  CHECK(grid.find("CCCCCCCCCC") != std::string::npos);
}

}
