#pragma once

#include <span>
#include <string>
#include <vector>

#include "rlab/layers.hpp"

namespace rlab {

enum class OptimizerKind { sgd, rmsprop };

OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double learning_rate = 2e-5;
  double decay = 0.9;     // rmsprop rho
  double epsilon = 1e-8;  // added outside the square root

  void validate() const;
};

/// w <- w - lr * g
void sgd_step(std::span<double> weights, std::span<const double> grads, double learning_rate);

/// acc <- rho * acc + (1 - rho) * g^2;  w <- w - lr * g / (sqrt(acc) + eps)
void rmsprop_step(std::span<double> weights, std::span<const double> grads, std::span<double> accumulator,
                  double learning_rate, double decay, double epsilon);

/// Applies one update to a list of parameters using their current gradients.
/// RMSprop accumulators are created lazily and keyed by position in the list.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {});

  void step(const std::vector<Parameter*>& params);
  void reset() { accumulators_.clear(); }

  const OptimizerConfig& config() const { return config_; }
  const std::vector<Tensor>& accumulators() const { return accumulators_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> accumulators_;
};

}  // namespace rlab
