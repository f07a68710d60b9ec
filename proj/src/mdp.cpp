#include "rlab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rlab {

FiniteMdp::FiniteMdp(std::size_t states, std::size_t actions)
    : n_states(states),
      n_actions(actions),
      transition(states * actions * states, 0.0),
      reward(states * actions, 0.0),
      terminal(states, false) {}

void FiniteMdp::make_terminal(std::size_t s) {
  terminal[s] = true;
  for (std::size_t a = 0; a < n_actions; ++a) {
    for (std::size_t next = 0; next < n_states; ++next) p(s, a, next) = next == s ? 1.0 : 0.0;
    r(s, a) = 0.0;
  }
}

void FiniteMdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw std::invalid_argument("FiniteMdp: empty state or action set");
  if (transition.size() != n_states * n_actions * n_states || reward.size() != n_states * n_actions ||
      terminal.size() != n_states) {
    throw std::invalid_argument("FiniteMdp: table sizes do not match n_states/n_actions");
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (std::size_t next = 0; next < n_states; ++next) {
        const double prob = p(s, a, next);
        if (!(prob >= 0.0)) {
          throw std::invalid_argument("FiniteMdp: negative transition probability at state " +
                                      std::to_string(s));
        }
        total += prob;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("FiniteMdp: transition row (" + std::to_string(s) + "," +
                                    std::to_string(a) + ") sums to " + std::to_string(total));
      }
      if (!std::isfinite(r(s, a))) throw std::invalid_argument("FiniteMdp: non-finite reward");
      if (terminal[s] && (p(s, a, s) != 1.0 || r(s, a) != 0.0)) {
        throw std::invalid_argument("FiniteMdp: terminal state " + std::to_string(s) +
                                    " is not absorbing with zero reward");
      }
    }
  }
}

void EpsilonSchedule::validate() const {
  if (!(0.0 <= final && final <= initial && initial <= 1.0)) {
    throw std::invalid_argument("EpsilonSchedule: need 0 <= final <= initial <= 1");
  }
  if (steps < 1) throw std::invalid_argument("EpsilonSchedule: steps must be >= 1");
}

double EpsilonSchedule::at(std::int64_t step) const {
  if (step <= 0) return initial;
  if (step >= steps) return final;
  const double frac = static_cast<double>(step) / static_cast<double>(steps);
  return initial + (final - initial) * frac;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  // Backward accumulation keeps G = r + gamma * G_rest exact at every prefix.
  double g = 0.0;
  for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) g = *it + gamma * g;
  return g;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t epsilon_greedy_select(std::span<const double> q_row, double epsilon, Rng& rng) {
  if (q_row.empty()) throw std::invalid_argument("epsilon_greedy_select: empty q row");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon_greedy_select: epsilon outside [0,1]");
  }
  if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.index(q_row.size());
  return argmax(q_row);
}

namespace {

double backup_value(const FiniteMdp& mdp, const ValueTable& v, std::size_t s, std::size_t a,
                    double gamma) {
  double expected = 0.0;
  const double* row = &mdp.transition[(s * mdp.n_actions + a) * mdp.n_states];
  for (std::size_t next = 0; next < mdp.n_states; ++next) expected += row[next] * v[next];
  return mdp.r(s, a) + gamma * expected;
}

}  // namespace

ValueTable value_iteration(const FiniteMdp& mdp, double gamma, ValueIterationOptions options) {
  mdp.validate();
  if (!(options.tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("value_iteration: gamma outside [0,1]");
  ValueTable v(mdp.n_states, 0.0);
  ValueTable next(mdp.n_states, 0.0);
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      if (mdp.terminal[s]) {
        next[s] = 0.0;
        continue;
      }
      double best = backup_value(mdp, v, s, 0, gamma);
      for (std::size_t a = 1; a < mdp.n_actions; ++a) best = std::max(best, backup_value(mdp, v, s, a, gamma));
      next[s] = best;
    }
    const double residual = sup_norm_distance(v, next);
    v.swap(next);
    if (residual < options.tol) return v;
  }
  throw std::runtime_error("value_iteration: no convergence after " + std::to_string(options.max_sweeps) +
                           " sweeps; check gamma and terminal reachability");
}

QTable q_optimality_backup(const FiniteMdp& mdp, const QTable& q, double gamma) {
  if (q.n_states() != mdp.n_states || q.n_actions() != mdp.n_actions) {
    throw std::invalid_argument("q_optimality_backup: table shape does not match the MDP");
  }
  ValueTable greedy(mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    const auto row = q.row(s);
    greedy[s] = *std::max_element(row.begin(), row.end());
  }
  QTable out(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) out(s, a) = backup_value(mdp, greedy, s, a, gamma);
  }
  return out;
}

QTable q_value_iteration(const FiniteMdp& mdp, double gamma, ValueIterationOptions options) {
  mdp.validate();
  QTable q(mdp.n_states, mdp.n_actions);
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    QTable next = q_optimality_backup(mdp, q, gamma);
    const double residual = sup_norm_distance(q.values(), next.values());
    q = std::move(next);
    if (residual < options.tol) return q;
  }
  throw std::runtime_error("q_value_iteration: no convergence after " + std::to_string(options.max_sweeps) +
                           " sweeps");
}

TabularPolicy greedy_policy_from_q(const QTable& q) {
  TabularPolicy pi(q.n_states(), q.n_actions());
  for (std::size_t s = 0; s < q.n_states(); ++s) pi(s, argmax(q.row(s))) = 1.0;
  return pi;
}

ValueTable policy_evaluation(const FiniteMdp& mdp, const TabularPolicy& policy, double gamma,
                             ValueIterationOptions options) {
  mdp.validate();
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions) {
    throw std::invalid_argument("policy_evaluation: policy shape does not match the MDP");
  }
  ValueTable v(mdp.n_states, 0.0);
  ValueTable next(mdp.n_states, 0.0);
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      double total = 0.0;
      if (!mdp.terminal[s]) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
          if (policy(s, a) != 0.0) total += policy(s, a) * backup_value(mdp, v, s, a, gamma);
        }
      }
      next[s] = total;
    }
    const double residual = sup_norm_distance(v, next);
    v.swap(next);
    if (residual < options.tol) return v;
  }
  throw std::runtime_error("policy_evaluation: no convergence");
}

QTable q_from_values(const FiniteMdp& mdp, const ValueTable& v, double gamma) {
  QTable q(mdp.n_states, mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    for (std::size_t a = 0; a < mdp.n_actions; ++a) q(s, a) = backup_value(mdp, v, s, a, gamma);
  }
  return q;
}

double sup_norm_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sup_norm_distance: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace rlab
