#include "rlab/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace rlab {

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "rmsprop"; }

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
  if (kind == OptimizerKind::rmsprop && !(decay > 0.0 && decay < 1.0)) {
    throw std::invalid_argument("optimizer: rmsprop decay must lie in (0,1)");
  }
  if (!(epsilon >= 0.0)) throw std::invalid_argument("optimizer: epsilon must be >= 0");
}

void sgd_step(std::span<double> weights, std::span<const double> grads, double learning_rate) {
  if (weights.size() != grads.size()) throw std::invalid_argument("sgd_step: size mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] -= learning_rate * grads[i];
}

void rmsprop_step(std::span<double> weights, std::span<const double> grads, std::span<double> accumulator,
                  double learning_rate, double decay, double epsilon) {
  if (weights.size() != grads.size() || weights.size() != accumulator.size()) {
    throw std::invalid_argument("rmsprop_step: size mismatch");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = grads[i];
    accumulator[i] = decay * accumulator[i] + (1.0 - decay) * g * g;
    weights[i] -= learning_rate * g / (std::sqrt(accumulator[i]) + epsilon);
  }
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(const std::vector<Parameter*>& params) {
  if (config_.kind == OptimizerKind::sgd) {
    for (Parameter* p : params) sgd_step(p->value.data(), p->grad.data(), config_.learning_rate);
    return;
  }
  if (accumulators_.empty()) {
    for (Parameter* p : params) accumulators_.emplace_back(p->value.shape(), 0.0);
  }
  if (accumulators_.size() != params.size()) throw std::logic_error("Optimizer: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    rmsprop_step(params[i]->value.data(), params[i]->grad.data(), accumulators_[i].data(), config_.learning_rate,
                 config_.decay, config_.epsilon);
  }
}

}  // namespace rlab
