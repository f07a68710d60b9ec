#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rlab/layers.hpp"

namespace rlab {

/// Sequential stack of layers over a fixed per-sample input shape.
/// Copying deep-copies every layer (used for the target network).
class Network {
 public:
  Network() = default;
  explicit Network(Tensor::Shape input_shape);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Appends a layer, checking it accepts the current output shape. The
  /// error message names the offending layer.
  Layer& add(std::unique_ptr<Layer> layer);

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    return static_cast<L&>(add(std::make_unique<L>(std::forward<Args>(args)...)));
  }

  /// Random initialisation of every dense, conv and dueling layer.
  void initialize(Rng& rng);

  /// Input is [B x input_shape...].
  Tensor forward(const Tensor& batch, Mode mode);
  /// With input_grad false the first layer may skip dJ/dinput and return an
  /// empty tensor.
  Tensor backward(const Tensor& grad_out, bool input_grad = true);

  std::vector<Parameter*> parameters();
  /// Every persisted tensor: parameter values then buffers, layer by layer.
  std::vector<Tensor*> state_tensors();
  std::vector<const Tensor*> state_tensors() const;
  std::size_t parameter_count() const;

  /// Copies parameters and buffers bit-exactly; architectures must match.
  void copy_state_from(const Network& other);
  bool same_architecture(const Network& other) const;

  const Tensor::Shape& input_shape() const { return input_shape_; }
  const Tensor::Shape& output_shape() const { return output_shape_; }
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  std::string summary() const;

 private:
  Tensor::Shape input_shape_;
  Tensor::Shape output_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace rlab
