#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>

#include "rlab/layers.hpp"
#include "rlab/mdp.hpp"
#include "rlab/network.hpp"
#include "rlab/optim.hpp"
#include "rlab/replay.hpp"
#include "rlab/rng.hpp"

namespace rlab {

/// The four agent variants. Combinations (e.g. dueling with prioritized
/// replay) are deliberately not representable.
enum class Algorithm { dqn, double_dqn, dueling, dqn_per };

Algorithm algorithm_from_string(const std::string& name);
std::string to_string(Algorithm algorithm);

enum class NetworkPreset { paper, desk };

NetworkPreset network_preset_from_string(const std::string& name);
std::string to_string(NetworkPreset preset);

struct AgentConfig {
  Algorithm algorithm = Algorithm::dqn;
  bool batch_norm = false;
  double gamma = 0.99;
  std::size_t batch_size = 128;
  std::size_t target_sync_steps = 1000;
  EpsilonSchedule epsilon{0.1, 1e-4, 100000};
  OptimizerConfig optimizer{OptimizerKind::rmsprop, 2e-5, 0.9, 1e-8};
  /// 0 selects max(batch_size, 1000).
  std::size_t warmup_size = 0;
  /// Environment steps between optimisation steps.
  std::size_t train_interval = 1;
  PerParams per;
  DuelingMode dueling_mode = DuelingMode::sum;
  NetworkPreset network = NetworkPreset::paper;

  std::size_t effective_warmup() const;
  void validate() const;
};

/// y = r if terminal, else r + gamma * max_a q_target(s', a).
double dqn_target(double reward, std::span<const double> next_q_target, bool terminal, double gamma);

/// a* = argmax q_policy(s', .) (lowest index on ties);
/// y = r if terminal, else r + gamma * q_target(s', a*).
double double_dqn_target(double reward, std::span<const double> next_q_policy, std::span<const double> next_q_target,
                         bool terminal, double gamma);

/// Convolutional Q-network for [4 x H x W] stacked frames.
///
/// paper: conv 32 8x8/4, conv 64 4x4/2, conv 64 3x3/1, dense 512, output.
/// desk:  conv 8 8x8/4,  conv 16 4x4/2, conv 16 3x3/1, dense 64, output.
/// Batch norm (if enabled) follows each convolution; relu follows each hidden
/// layer. The dueling variant ends in a DuelingHead instead of a dense output.
Network build_network(const AgentConfig& config, const Tensor::Shape& observation_shape, std::size_t n_actions,
                      Rng& rng);

struct TrainStats {
  enum class Status { trained, warming_up };
  Status status = Status::warming_up;
  double loss = 0.0;          // (1/M) sum_k w_k (y_k - q(s_k, a_k))^2
  double mean_abs_td = 0.0;
  bool synced = false;
  std::size_t memory_size = 0;
};

/// Policy/target network pair with its replay memory and optimiser.
class Agent {
 public:
  Agent(AgentConfig config, Network policy, std::size_t replay_capacity);

  /// Epsilon-greedy over the policy network (batch norm in inference mode).
  std::size_t act(const Tensor& observation, std::int64_t step, Rng& rng);
  std::size_t greedy_action(const Tensor& observation);
  /// Policy-network action values for one observation, inference mode.
  std::vector<double> q_values(const Tensor& observation);
  double epsilon(std::int64_t step) const { return config_.epsilon.at(step); }

  void remember(const Transition& transition);

  /// One optimisation step; a no-op reporting warming_up until the memory
  /// holds warmup_size transitions. Throws std::runtime_error on a
  /// non-finite loss.
  TrainStats train_step(Rng& rng);

  /// Target <- policy (bit-exact) and reset the sync counter.
  void sync_target();

  /// Targets y_k for a batch, from the target network (and the policy
  /// network for the double variant). Neither network is modified.
  std::vector<double> compute_targets(const TransitionBatch& batch);

  const AgentConfig& config() const { return config_; }
  Network& policy() { return policy_; }
  Network& target() { return target_; }
  const Network& policy() const { return policy_; }
  const Network& target() const { return target_; }
  Optimizer& optimizer() { return optimizer_; }
  std::size_t steps_since_sync() const { return steps_since_sync_; }
  std::int64_t train_steps() const { return train_steps_; }
  std::size_t memory_size() const;

  ReplayPool* uniform_memory() { return std::get_if<ReplayPool>(&memory_); }
  PrioritizedReplay* prioritized_memory() { return std::get_if<PrioritizedReplay>(&memory_); }

 private:
  AgentConfig config_;
  Network policy_;
  Network target_;
  Optimizer optimizer_;
  std::variant<ReplayPool, PrioritizedReplay> memory_;
  std::size_t steps_since_sync_ = 0;
  std::int64_t train_steps_ = 0;
};

}  // namespace rlab
