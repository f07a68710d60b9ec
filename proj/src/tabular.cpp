#include "rlab/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace rlab {

GridWorld GridWorld::cliff_walking() {
  GridWorld world;
  for (int col = 1; col < world.cols - 1; ++col) world.cliff.insert({world.rows - 1, col});
  return world;
}

bool GridWorld::is_cliff_adjacent(Cell c) const {
  if (!contains(c) || is_cliff(c) || c == start || c == goal) return false;
  const Cell neighbours[] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
  for (const Cell& n : neighbours) {
    if (is_cliff(n)) return true;
  }
  return false;
}

void GridWorld::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("GridWorld: empty grid");
  if (!contains(start) || !contains(goal)) throw std::invalid_argument("GridWorld: start/goal outside grid");
  if (is_cliff(start) || is_cliff(goal)) throw std::invalid_argument("GridWorld: start or goal inside the cliff");
}

GridStep gridworld_step(const GridWorld& world, Cell cell, Move action) {
  if (!world.contains(cell)) throw std::invalid_argument("gridworld_step: cell outside the grid");
  Cell next = cell;
  switch (action) {
    case Move::up: next.row = std::max(0, cell.row - 1); break;
    case Move::down: next.row = std::min(world.rows - 1, cell.row + 1); break;
    case Move::left: next.col = std::max(0, cell.col - 1); break;
    case Move::right: next.col = std::min(world.cols - 1, cell.col + 1); break;
  }
  if (world.is_cliff(next)) return {world.start, world.cliff_reward, false};
  if (next == world.goal) return {world.goal, world.step_reward, true};
  return {next, world.step_reward, false};
}

FiniteMdp gridworld_mdp(const GridWorld& world) {
  world.validate();
  FiniteMdp mdp(world.n_states(), kGridActions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const Cell c = world.cell(s);
    if (c == world.goal) {
      mdp.make_terminal(s);
      continue;
    }
    for (std::size_t a = 0; a < kGridActions; ++a) {
      const GridStep step = gridworld_step(world, c, static_cast<Move>(a));
      mdp.p(s, a, world.index(step.next)) = 1.0;
      mdp.r(s, a) = step.reward;
    }
  }
  return mdp;
}

EnvStep GridWorldEnv::step(std::size_t state, std::size_t action, Rng&) {
  if (action >= kGridActions) throw std::invalid_argument("GridWorldEnv: action out of range");
  const GridStep step = gridworld_step(world_, world_.cell(state), static_cast<Move>(action));
  return {world_.index(step.next), step.reward, step.terminal};
}

MdpEnv::MdpEnv(FiniteMdp mdp, std::size_t start) : mdp_(std::move(mdp)), start_(start) {
  mdp_.validate();
  if (start_ >= mdp_.n_states) throw std::invalid_argument("MdpEnv: start state out of range");
}

EnvStep MdpEnv::step(std::size_t state, std::size_t action, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t next = mdp_.n_states - 1;
  for (std::size_t s2 = 0; s2 < mdp_.n_states; ++s2) {
    const double prob = mdp_.p(state, action, s2);
    cumulative += prob;
    if (prob > 0.0 && u < cumulative) {
      next = s2;
      break;
    }
  }
  return {next, mdp_.r(state, action), mdp_.terminal[next]};
}

void TdParams::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("TdParams: alpha must lie in (0,1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("TdParams: gamma must lie in [0,1]");
  if (!(alpha_visit_scale >= 0.0)) throw std::invalid_argument("TdParams: alpha_visit_scale must be >= 0");
  if (n_episodes < 1) throw std::invalid_argument("TdParams: n_episodes must be >= 1");
  epsilon.validate();
}

double TdParams::alpha_at(std::size_t visits) const {
  if (alpha_visit_scale == 0.0) return alpha;
  return alpha * alpha_visit_scale / (alpha_visit_scale + static_cast<double>(visits));
}

namespace {

enum class TdTarget { sarsa, q_learning };

QTable td_control(EpisodicEnv& env, const TdParams& params, Rng& rng, const TdObserver& observer,
                  TdTarget kind) {
  params.validate();
  QTable q(env.n_states(), env.n_actions());
  std::vector<std::size_t> visits(env.n_states() * env.n_actions(), 0);
  for (std::size_t episode = 0; episode < params.n_episodes; ++episode) {
    const double eps = params.epsilon.at(static_cast<std::int64_t>(episode));
    std::size_t s = env.reset(rng);
    std::size_t a = epsilon_greedy_select(q.row(s), eps, rng);
    for (std::size_t t = 0; t < params.max_steps; ++t) {
      const EnvStep step = env.step(s, a, rng);
      std::size_t next_action = 0;
      double bootstrap = 0.0;
      if (!step.terminal) {
        next_action = epsilon_greedy_select(q.row(step.next_state), eps, rng);
        bootstrap = kind == TdTarget::sarsa ? q(step.next_state, next_action)
                                            : q(step.next_state, argmax(q.row(step.next_state)));
      }
      const double target = step.reward + params.gamma * bootstrap;
      q(s, a) += params.alpha_at(visits[s * env.n_actions() + a]++) * (target - q(s, a));
      if (observer) observer({episode, s, a, step.reward, step.next_state, step.terminal, target, q(s, a)});
      if (step.terminal) break;
      s = step.next_state;
      a = next_action;
    }
  }
  return q;
}

}  // namespace

QTable sarsa_train(EpisodicEnv& env, const TdParams& params, Rng& rng, const TdObserver& observer) {
  return td_control(env, params, rng, observer, TdTarget::sarsa);
}

QTable q_learning_train(EpisodicEnv& env, const TdParams& params, Rng& rng, const TdObserver& observer) {
  return td_control(env, params, rng, observer, TdTarget::q_learning);
}

Rollout greedy_rollout(EpisodicEnv& env, const QTable& q, Rng& rng, std::size_t max_steps) {
  Rollout out;
  std::size_t s = env.reset(rng);
  out.states.push_back(s);
  for (std::size_t t = 0; t < max_steps; ++t) {
    const EnvStep step = env.step(s, argmax(q.row(s)), rng);
    out.total_return += step.reward;
    out.states.push_back(step.next_state);
    s = step.next_state;
    if (step.terminal) {
      out.reached_terminal = true;
      break;
    }
  }
  return out;
}

std::string render_path(const GridWorld& world, const Rollout& path) {
  std::vector<std::string> grid(static_cast<std::size_t>(world.rows), std::string(world.cols, '.'));
  for (const Cell& c : world.cliff) grid[c.row][c.col] = 'C';
  for (std::size_t s : path.states) {
    const Cell c = world.cell(s);
    grid[c.row][c.col] = '*';
  }
  grid[world.start.row][world.start.col] = 'S';
  grid[world.goal.row][world.goal.col] = 'G';
  std::ostringstream out;
  for (const auto& line : grid) out << line << '\n';
  return out.str();
}

std::vector<std::optional<double>> mc_value_estimate(const std::vector<Trajectory>& episodes,
                                                     std::size_t n_states, double gamma, VisitMode mode) {
  std::vector<double> sum_returns(n_states, 0.0);
  std::vector<std::size_t> visits(n_states, 0);
  for (const Trajectory& ep : episodes) {
    if (!ep.terminated) {
      throw std::invalid_argument("mc_value_estimate: trajectory did not terminate; returns are undefined");
    }
    if (ep.states.size() != ep.rewards.size()) {
      throw std::invalid_argument("mc_value_estimate: states and rewards differ in length");
    }
    std::vector<double> returns(ep.states.size());
    double g = 0.0;
    for (std::size_t t = ep.states.size(); t-- > 0;) {
      g = ep.rewards[t] + gamma * g;
      returns[t] = g;
    }
    std::vector<bool> seen(n_states, false);
    for (std::size_t t = 0; t < ep.states.size(); ++t) {
      const std::size_t s = ep.states[t];
      if (s >= n_states) throw std::invalid_argument("mc_value_estimate: state out of range");
      if (mode == VisitMode::first && seen[s]) continue;
      seen[s] = true;
      sum_returns[s] += returns[t];
      ++visits[s];
    }
  }
  std::vector<std::optional<double>> v(n_states);
  for (std::size_t s = 0; s < n_states; ++s) {
    if (visits[s] > 0) v[s] = sum_returns[s] / static_cast<double>(visits[s]);
  }
  return v;
}

void td0_value_update(ValueTable& v, std::size_t s, double r, std::size_t s_next, double alpha, double gamma,
                      bool terminal) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("td0_value_update: alpha must lie in (0,1]");
  const double bootstrap = terminal ? 0.0 : v.at(s_next);
  v.at(s) += alpha * (r + gamma * bootstrap - v.at(s));
}

}  // namespace rlab
