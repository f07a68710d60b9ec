#pragma once

// Finite-difference checks shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "rlab/gradcheck.hpp"
#include "rlab/layers.hpp"
#include "rlab/rng.hpp"

namespace rlab::testing {

inline Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

struct GradReport {
  double input = 0.0;
  double params = 0.0;
  double worst() const { return std::max(input, params); }
};

/// Compares layer.backward against central differences of the scalar
/// J = sum(c * layer(x)) for a random fixed c, over the input and every
/// parameter.
inline GradReport check_layer(Layer& layer, const Tensor& x, Mode mode, Rng& rng) {
  const Tensor probe = layer.forward(x, mode);
  const Tensor c = random_tensor(probe.shape(), rng);
  auto loss = [&](const Tensor& in) {
    const Tensor out = layer.forward(in, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += c.data()[i] * out.data()[i];
    return s;
  };

  layer.forward(x, mode);
  const Tensor grad_in = layer.backward(c);
  std::vector<Tensor> param_grads;
  for (Parameter* p : layer.parameters()) param_grads.push_back(p->grad);

  GradReport report;
  report.input = max_relative_error(grad_in, finite_difference_grad(loss, x));
  const auto params = layer.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter* p = params[k];
    auto f = [&](const Tensor& w) {
      const Tensor saved = p->value;
      p->value = w;
      const double v = loss(x);
      p->value = saved;
      return v;
    };
    const Tensor numeric = finite_difference_grad(f, p->value);
    report.params = std::max(report.params, max_relative_error(param_grads[k], numeric));
  }
  return report;
}

/// Max pooling is not differentiable at ties; spread the inputs apart.
inline Tensor untied_tensor(Tensor::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::vector<double> values(t.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i) * 0.05;
  for (std::size_t i = values.size(); i > 1; --i) std::swap(values[i - 1], values[rng.index(i)]);
  for (std::size_t i = 0; i < values.size(); ++i) t.data()[i] = values[i] - 1.0 + rng.uniform(0.0, 0.01);
  return t;
}

struct NamedCheck {
  std::string name;
  std::function<GradReport(Rng&)> run;
};

/// One entry per layer type and activation; each draws fresh random
/// inputs and parameters from the given generator.
inline std::vector<NamedCheck> layer_gradient_checks() {
  std::vector<NamedCheck> checks;
  for (Activation act : {Activation::identity, Activation::relu, Activation::sigmoid, Activation::tanh}) {
    checks.push_back({"dense/" + to_string(act), [act](Rng& rng) {
                        Dense d(4, 3, act);
                        d.initialize(rng);
                        d.bias().value = random_tensor({3}, rng, -0.5, 0.5);
                        return check_layer(d, random_tensor({5, 4}, rng), Mode::train, rng);
                      }});
  }
  checks.push_back({"conv2d", [](Rng& rng) {
                      Conv2d conv(2, 3, 3, 2, 1);
                      conv.initialize(rng);
                      conv.bias().value = random_tensor({3}, rng, -0.5, 0.5);
                      return check_layer(conv, random_tensor({2, 2, 7, 7}, rng), Mode::train, rng);
                    }});
  checks.push_back({"conv2d/2x2-on-3x3", [](Rng& rng) {
                      Conv2d conv(1, 1, 2, 1, 0);
                      conv.initialize(rng);
                      return check_layer(conv, random_tensor({1, 1, 3, 3}, rng), Mode::train, rng);
                    }});
  checks.push_back({"conv2d/sparse-binary", [](Rng& rng) {
                      // Mostly-zero input, as produced by frame preprocessing.
                      Conv2d conv(2, 3, 4, 2, 0);
                      conv.initialize(rng);
                      Tensor x({2, 2, 12, 12});
                      for (double& v : x.data()) v = rng.uniform() < 0.04 ? 1.0 : 0.0;
                      return check_layer(conv, x, Mode::train, rng);
                    }});
  checks.push_back({"maxpool", [](Rng& rng) {
                      Pool2d pool(PoolMode::max, 2, 2);
                      return check_layer(pool, untied_tensor({2, 2, 6, 6}, rng), Mode::train, rng);
                    }});
  checks.push_back({"avgpool", [](Rng& rng) {
                      Pool2d pool(PoolMode::avg, 2, 2);
                      return check_layer(pool, random_tensor({2, 2, 6, 6}, rng), Mode::train, rng);
                    }});
  checks.push_back({"batchnorm/features", [](Rng& rng) {
                      BatchNorm bn(4);
                      bn.scale().value = random_tensor({4}, rng, 0.5, 1.5);
                      bn.shift().value = random_tensor({4}, rng);
                      return check_layer(bn, random_tensor({8, 4}, rng), Mode::train, rng);
                    }});
  checks.push_back({"batchnorm/channels", [](Rng& rng) {
                      BatchNorm bn(3);
                      bn.scale().value = random_tensor({3}, rng, 0.5, 1.5);
                      bn.shift().value = random_tensor({3}, rng);
                      return check_layer(bn, random_tensor({2, 3, 3, 3}, rng), Mode::train, rng);
                    }});
  checks.push_back({"batchnorm/infer", [](Rng& rng) {
                      BatchNorm bn(4);
                      bn.running_mean() = random_tensor({4}, rng);
                      bn.running_var() = random_tensor({4}, rng, 0.5, 2.0);
                      bn.scale().value = random_tensor({4}, rng, 0.5, 1.5);
                      return check_layer(bn, random_tensor({3, 4}, rng), Mode::infer, rng);
                    }});
  for (Activation act : {Activation::relu, Activation::sigmoid, Activation::tanh}) {
    checks.push_back({"activation/" + to_string(act), [act](Rng& rng) {
                        ActivationLayer layer(act);
                        return check_layer(layer, random_tensor({4, 6}, rng), Mode::train, rng);
                      }});
  }
  checks.push_back({"dueling/sum", [](Rng& rng) {
                      DuelingHead head(5, 3, DuelingMode::sum);
                      head.initialize(rng);
                      return check_layer(head, random_tensor({4, 5}, rng), Mode::train, rng);
                    }});
  checks.push_back({"dueling/mean", [](Rng& rng) {
                      DuelingHead head(5, 3, DuelingMode::mean_subtract);
                      head.initialize(rng);
                      return check_layer(head, random_tensor({4, 5}, rng), Mode::train, rng);
                    }});
  checks.push_back({"mse", [](Rng& rng) {
                      const Tensor y = random_tensor({8}, rng);
                      const Tensor y_hat = random_tensor({8}, rng);
                      const Tensor analytic = mse_loss(y_hat, y).grad;
                      const Tensor numeric =
                          finite_difference_grad([&](const Tensor& t) { return mse_loss(t, y).loss; }, y_hat);
                      return GradReport{max_relative_error(analytic, numeric), 0.0};
                    }});
  return checks;
}

}  // namespace rlab::testing
