#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rlab/rng.hpp"

namespace rlab {

/// Finite MDP with dense transition and expected-reward tables.
///
/// Terminal states are absorbing: every action self-loops with zero reward.
struct FiniteMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;  // [s][a][s'] flattened
  std::vector<double> reward;      // [s][a] flattened
  std::vector<bool> terminal;

  FiniteMdp() = default;
  FiniteMdp(std::size_t states, std::size_t actions);

  double& p(std::size_t s, std::size_t a, std::size_t next) {
    return transition[(s * n_actions + a) * n_states + next];
  }
  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * n_actions + a) * n_states + next];
  }
  double& r(std::size_t s, std::size_t a) { return reward[s * n_actions + a]; }
  double r(std::size_t s, std::size_t a) const { return reward[s * n_actions + a]; }

  /// Turn a state into an absorbing zero-reward terminal.
  void make_terminal(std::size_t s);

  /// Throws std::invalid_argument when a row is not a distribution or a
  /// terminal state is not absorbing.
  void validate() const;
};

using ValueTable = std::vector<double>;

/// Row-major table of action values, one row per state.
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
      : n_states_(n_states), n_actions_(n_actions), data_(n_states * n_actions, fill) {}

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  double& operator()(std::size_t s, std::size_t a) { return data_[s * n_actions_ + a]; }
  double operator()(std::size_t s, std::size_t a) const { return data_[s * n_actions_ + a]; }

  std::span<double> row(std::size_t s) { return {data_.data() + s * n_actions_, n_actions_}; }
  std::span<const double> row(std::size_t s) const {
    return {data_.data() + s * n_actions_, n_actions_};
  }
  std::span<const double> values() const { return data_; }

  bool operator==(const QTable&) const = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> data_;
};

/// pi[s][a]; each row is a probability distribution.
using TabularPolicy = QTable;

/// Linear ramp from `initial` at step 0 to `final` at `steps`, flat after.
struct EpsilonSchedule {
  double initial = 0.1;
  double final = 1e-4;
  std::int64_t steps = 100000;

  void validate() const;
  double at(std::int64_t step) const;
};

/// Sum of gamma^k * rewards[k]; zero for an empty sequence.
double discounted_return(std::span<const double> rewards, double gamma);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

/// With probability epsilon pick uniformly among all actions, otherwise the
/// argmax. The argmax therefore has probability 1 - epsilon + epsilon/m.
std::size_t epsilon_greedy_select(std::span<const double> q_row, double epsilon, Rng& rng);

struct ValueIterationOptions {
  double tol = 1e-8;
  int max_sweeps = 10000;
};

/// Optimal state values by Bellman optimality sweeps (in-place Jacobi style).
/// Throws std::runtime_error when the sweep cap is hit.
ValueTable value_iteration(const FiniteMdp& mdp, double gamma,
                           ValueIterationOptions options = {});

/// One Bellman optimality backup of an action-value table.
QTable q_optimality_backup(const FiniteMdp& mdp, const QTable& q, double gamma);

/// Repeated q_optimality_backup until the sup-norm change drops below tol.
QTable q_value_iteration(const FiniteMdp& mdp, double gamma, ValueIterationOptions options = {});

/// Deterministic policy on the per-state argmax (lowest index on ties).
TabularPolicy greedy_policy_from_q(const QTable& q);

/// Exact v_pi by iterative evaluation.
ValueTable policy_evaluation(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma,
                             ValueIterationOptions options = {});

/// q_pi(s,a) = R(s,a) + gamma * sum_s' P v(s').
QTable q_from_values(const FiniteMdp& mdp, const ValueTable& v, double gamma);

double sup_norm_distance(std::span<const double> a, std::span<const double> b);

}  // namespace rlab
