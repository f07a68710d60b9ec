#include "rlab/agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rlab {

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "dqn") return Algorithm::dqn;
  if (name == "double" || name == "double_dqn" || name == "double-dqn") return Algorithm::double_dqn;
  if (name == "dueling" || name == "dueling_dqn" || name == "dueling-dqn") return Algorithm::dueling;
  if (name == "dqn-per" || name == "dqn_per" || name == "per") return Algorithm::dqn_per;
  throw std::invalid_argument("unknown algorithm '" + name +
                              "' (expected dqn, double, dueling or dqn-per; variants cannot be combined)");
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::dqn: return "dqn";
    case Algorithm::double_dqn: return "double";
    case Algorithm::dueling: return "dueling";
    case Algorithm::dqn_per: return "dqn-per";
  }
  return "?";
}

NetworkPreset network_preset_from_string(const std::string& name) {
  if (name == "paper") return NetworkPreset::paper;
  if (name == "desk") return NetworkPreset::desk;
  throw std::invalid_argument("unknown network preset '" + name + "' (expected paper or desk)");
}

std::string to_string(NetworkPreset preset) { return preset == NetworkPreset::paper ? "paper" : "desk"; }

std::size_t AgentConfig::effective_warmup() const {
  return warmup_size == 0 ? std::max<std::size_t>(batch_size, 1000) : warmup_size;
}

void AgentConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("AgentConfig: gamma must lie in [0,1]");
  if (batch_size < 1) throw std::invalid_argument("AgentConfig: batch_size must be >= 1");
  if (target_sync_steps < 1) throw std::invalid_argument("AgentConfig: target_sync_steps must be >= 1");
  if (train_interval < 1) throw std::invalid_argument("AgentConfig: train_interval must be >= 1");
  if (effective_warmup() < batch_size) throw std::invalid_argument("AgentConfig: warmup_size must be >= batch_size");
  if (batch_norm && batch_size < 2) throw std::invalid_argument("AgentConfig: batch norm needs batch_size >= 2");
  epsilon.validate();
  optimizer.validate();
  per.validate();
}

double dqn_target(double reward, std::span<const double> next_q_target, bool terminal, double gamma) {
  if (terminal) return reward;
  return reward + gamma * next_q_target[argmax(next_q_target)];
}

double double_dqn_target(double reward, std::span<const double> next_q_policy, std::span<const double> next_q_target,
                         bool terminal, double gamma) {
  if (next_q_policy.size() != next_q_target.size()) {
    throw std::invalid_argument("double_dqn_target: policy and target rows differ in length");
  }
  if (terminal) return reward;
  return reward + gamma * next_q_target[argmax(next_q_policy)];
}

Network build_network(const AgentConfig& config, const Tensor::Shape& observation_shape, std::size_t n_actions,
                      Rng& rng) {
  if (observation_shape.size() != 3) {
    throw std::invalid_argument("build_network: expected [frames x H x W], got " + shape_string(observation_shape));
  }
  if (n_actions == 0) throw std::invalid_argument("build_network: no actions");
  const bool paper = config.network == NetworkPreset::paper;
  const std::size_t c1 = paper ? 32 : 8, c2 = paper ? 64 : 16, c3 = paper ? 64 : 16;
  const std::size_t hidden = paper ? 512 : 64;

  Network net(observation_shape);
  auto conv_block = [&](std::size_t in, std::size_t out, std::size_t k, std::size_t s) {
    net.emplace<Conv2d>(in, out, k, s, 0);
    if (config.batch_norm) net.emplace<BatchNorm>(out);
    net.emplace<ActivationLayer>(Activation::relu);
  };
  conv_block(observation_shape[0], c1, 8, 4);
  conv_block(c1, c2, 4, 2);
  conv_block(c2, c3, 3, 1);
  net.emplace<Flatten>();
  net.emplace<Dense>(net.output_shape()[0], hidden, Activation::relu);
  if (config.algorithm == Algorithm::dueling) {
    net.emplace<DuelingHead>(hidden, n_actions, config.dueling_mode);
  } else {
    net.emplace<Dense>(hidden, n_actions, Activation::identity);
  }
  net.initialize(rng);
  return net;
}

namespace {

std::variant<ReplayPool, PrioritizedReplay> make_memory(const AgentConfig& config, std::size_t capacity) {
  if (config.algorithm == Algorithm::dqn_per) return PrioritizedReplay(capacity, config.per);
  return ReplayPool(capacity);
}

Tensor single_batch(const Tensor& observation) {
  Tensor::Shape shape{1};
  shape.insert(shape.end(), observation.shape().begin(), observation.shape().end());
  return observation.reshaped(shape);
}

}  // namespace

Agent::Agent(AgentConfig config, Network policy, std::size_t replay_capacity)
    : config_(config),
      policy_(std::move(policy)),
      target_(policy_),
      optimizer_(config.optimizer),
      memory_(make_memory(config, replay_capacity)) {
  config_.validate();
  if (policy_.output_shape().size() != 1) throw std::invalid_argument("Agent: network must output one value per action");
}

std::size_t Agent::memory_size() const {
  return std::visit([](const auto& m) { return m.size(); }, memory_);
}

std::vector<double> Agent::q_values(const Tensor& observation) {
  const Tensor q = policy_.forward(single_batch(observation), Mode::infer);
  return {q.data().begin(), q.data().end()};
}

std::size_t Agent::greedy_action(const Tensor& observation) { return argmax(q_values(observation)); }

std::size_t Agent::act(const Tensor& observation, std::int64_t step, Rng& rng) {
  const std::vector<double> q = q_values(observation);
  return epsilon_greedy_select(q, config_.epsilon.at(step), rng);
}

void Agent::remember(const Transition& transition) {
  if (transition.action >= policy_.output_shape()[0]) throw std::invalid_argument("Agent::remember: action out of range");
  std::visit([&](auto& m) { m.push(transition); }, memory_);
}

void Agent::sync_target() {
  target_.copy_state_from(policy_);
  steps_since_sync_ = 0;
}

std::vector<double> Agent::compute_targets(const TransitionBatch& batch) {
  const std::size_t m = batch.size();
  const std::size_t n_actions = policy_.output_shape()[0];
  const Tensor next_target = target_.forward(batch.next_states, Mode::infer);
  Tensor next_policy;
  if (config_.algorithm == Algorithm::double_dqn) next_policy = policy_.forward(batch.next_states, Mode::infer);
  std::vector<double> y(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::span<const double> target_row(next_target.raw() + k * n_actions, n_actions);
    if (config_.algorithm == Algorithm::double_dqn) {
      const std::span<const double> policy_row(next_policy.raw() + k * n_actions, n_actions);
      y[k] = double_dqn_target(batch.rewards[k], policy_row, target_row, batch.terminals[k], config_.gamma);
    } else {
      y[k] = dqn_target(batch.rewards[k], target_row, batch.terminals[k], config_.gamma);
    }
  }
  return y;
}

TrainStats Agent::train_step(Rng& rng) {
  TrainStats stats;
  stats.memory_size = memory_size();
  if (stats.memory_size < config_.effective_warmup()) return stats;

  const std::size_t m = config_.batch_size;
  auto* prioritized = prioritized_memory();
  TransitionBatch batch = prioritized ? prioritized->sample(m, rng) : uniform_memory()->sample_uniform(m, rng);
  std::vector<double> weights(m, 1.0);
  if (prioritized) {
    weights = is_weights(batch.probabilities, prioritized->size(), beta_schedule(train_steps_, config_.per));
  }

  // Targets come first: they use inference-mode passes, and the training
  // forward pass below must be the last one before backward.
  const std::vector<double> y = compute_targets(batch);
  const Tensor q = policy_.forward(batch.states, Mode::train);

  // Loss (1/M) sum w (y - q)^2; only q(s_k, a_k) receives gradient.
  Tensor grad(q.shape());
  std::vector<double> td(m);
  double loss = 0.0, abs_td = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double predicted = q.at(k, batch.actions[k]);
    td[k] = y[k] - predicted;
    loss += weights[k] * td[k] * td[k];
    abs_td += std::abs(td[k]);
    grad.at(k, batch.actions[k]) = 2.0 * weights[k] * (predicted - y[k]) / static_cast<double>(m);
  }
  loss /= static_cast<double>(m);
  if (!std::isfinite(loss)) {
    throw std::runtime_error("train_step: non-finite loss after " + std::to_string(train_steps_) +
                             " steps; the network diverged");
  }
  policy_.backward(grad, false);
  optimizer_.step(policy_.parameters());

  if (prioritized) prioritized->update_priorities(batch.indices, td);

  ++train_steps_;
  ++steps_since_sync_;
  if (steps_since_sync_ >= config_.target_sync_steps) {
    sync_target();
    stats.synced = true;
  }
  stats.status = TrainStats::Status::trained;
  stats.loss = loss;
  stats.mean_abs_td = abs_td / static_cast<double>(m);
  return stats;
}

}  // namespace rlab
