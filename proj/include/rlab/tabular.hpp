#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rlab/mdp.hpp"
#include "rlab/rng.hpp"

namespace rlab {

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

enum class Move : std::size_t { up = 0, down = 1, left = 2, right = 3 };
inline constexpr std::size_t kGridActions = 4;

/// Deterministic grid with a cliff region. Entering a cliff cell sends the
/// agent back to the start with cliff_reward; entering the goal terminates.
struct GridWorld {
  int rows = 4;
  int cols = 12;
  Cell start{3, 0};
  Cell goal{3, 11};
  std::set<Cell> cliff;
  double step_reward = -1.0;
  double cliff_reward = -100.0;

  /// 4x12 grid, start bottom-left, goal bottom-right, cliff between them.
  static GridWorld cliff_walking();

  bool contains(Cell c) const { return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols; }
  bool is_cliff(Cell c) const { return cliff.count(c) != 0; }
  /// Non-cliff cells sharing an edge with a cliff cell, excluding start and goal.
  bool is_cliff_adjacent(Cell c) const;
  std::size_t n_states() const { return static_cast<std::size_t>(rows * cols); }
  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row * cols + c.col); }
  Cell cell(std::size_t index) const {
    return {static_cast<int>(index) / cols, static_cast<int>(index) % cols};
  }
  void validate() const;
};

struct GridStep {
  Cell next;
  double reward = 0.0;
  bool terminal = false;
};

/// Pure transition function of the grid; throws on a cell outside the grid.
GridStep gridworld_step(const GridWorld& world, Cell cell, Move action);

/// The grid as a FiniteMdp (goal absorbing; cliff cells unreachable).
FiniteMdp gridworld_mdp(const GridWorld& world);

struct EnvStep {
  std::size_t next_state = 0;
  double reward = 0.0;
  bool terminal = false;
};

/// Episodic environment with finite discrete states and actions.
class EpisodicEnv {
 public:
  virtual ~EpisodicEnv() = default;
  virtual std::size_t n_states() const = 0;
  virtual std::size_t n_actions() const = 0;
  virtual std::size_t reset(Rng& rng) = 0;
  virtual EnvStep step(std::size_t state, std::size_t action, Rng& rng) = 0;
};

class GridWorldEnv : public EpisodicEnv {
 public:
  explicit GridWorldEnv(GridWorld world) : world_(std::move(world)) { world_.validate(); }
  std::size_t n_states() const override { return world_.n_states(); }
  std::size_t n_actions() const override { return kGridActions; }
  std::size_t reset(Rng&) override { return world_.index(world_.start); }
  EnvStep step(std::size_t state, std::size_t action, Rng& rng) override;
  const GridWorld& world() const { return world_; }

 private:
  GridWorld world_;
};

/// Samples transitions of a FiniteMdp, starting every episode in `start`.
class MdpEnv : public EpisodicEnv {
 public:
  MdpEnv(FiniteMdp mdp, std::size_t start);
  std::size_t n_states() const override { return mdp_.n_states; }
  std::size_t n_actions() const override { return mdp_.n_actions; }
  std::size_t reset(Rng&) override { return start_; }
  EnvStep step(std::size_t state, std::size_t action, Rng& rng) override;
  const FiniteMdp& mdp() const { return mdp_; }

 private:
  FiniteMdp mdp_;
  std::size_t start_;
};

struct TdParams {
  double alpha = 0.1;
  /// When positive, the n-th update of a state-action pair (n from 0) uses
  /// alpha * c / (c + n) with c = alpha_visit_scale; 0 keeps alpha fixed.
  double alpha_visit_scale = 0.0;
  double gamma = 1.0;
  /// Indexed by episode number for the tabular learners.
  EpsilonSchedule epsilon{0.1, 0.1, 1};
  std::size_t n_episodes = 500;
  std::size_t max_steps = 10000;

  void validate() const;
  double alpha_at(std::size_t visits) const;
};

/// One applied update, reported to an optional observer.
struct TdUpdate {
  std::size_t episode;
  std::size_t state;
  std::size_t action;
  double reward;
  std::size_t next_state;
  bool terminal;
  double target;
  double new_value;
};
using TdObserver = std::function<void(const TdUpdate&)>;

QTable sarsa_train(EpisodicEnv& env, const TdParams& params, Rng& rng, const TdObserver& observer = {});
QTable q_learning_train(EpisodicEnv& env, const TdParams& params, Rng& rng,
                        const TdObserver& observer = {});

/// Greedy rollout from the start state, capped at max_steps.
struct Rollout {
  std::vector<std::size_t> states;  // includes start and final state
  double total_return = 0.0;
  bool reached_terminal = false;
  std::size_t length() const { return states.empty() ? 0 : states.size() - 1; }
};
Rollout greedy_rollout(EpisodicEnv& env, const QTable& q, Rng& rng, std::size_t max_steps = 1000);

/// ASCII overlay of a rollout path on the grid: S start, G goal, C cliff,
/// * visited, . empty.
std::string render_path(const GridWorld& world, const Rollout& path);

/// A completed episode: rewards[t] follows states[t].
struct Trajectory {
  std::vector<std::size_t> states;
  std::vector<double> rewards;
  bool terminated = true;
};

enum class VisitMode { first, every };

/// Monte Carlo averaging of observed returns; unvisited states have no estimate.
/// Throws std::invalid_argument on an incomplete trajectory.
std::vector<std::optional<double>> mc_value_estimate(const std::vector<Trajectory>& episodes,
                                                     std::size_t n_states, double gamma, VisitMode mode);

/// v(s) += alpha * (r + gamma * v(s') - v(s)), bootstrap dropped at terminals.
void td0_value_update(ValueTable& v, std::size_t s, double r, std::size_t s_next, double alpha,
                      double gamma, bool terminal);

}  // namespace rlab
