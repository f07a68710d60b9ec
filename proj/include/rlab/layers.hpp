#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rlab/rng.hpp"
#include "rlab/tensor.hpp"

namespace rlab {

enum class Mode { train, infer };

enum class Activation : std::int64_t { identity = 0, relu = 1, sigmoid = 2, tanh = 3 };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation kind);

/// Elementwise f(x).
Tensor activation_forward(const Tensor& x, Activation kind);
/// Elementwise f'(x) evaluated at the pre-activation x; relu'(0) = 0.
Tensor activation_grad(const Tensor& x, Activation kind);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // dJ/dy_hat
};

/// J = 1/2 * sum (y - y_hat)^2, gradient y_hat - y.
LossResult mse_loss(const Tensor& y_hat, const Tensor& y);

/// A trainable tensor and its gradient from the last backward pass.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Tags double as checkpoint record kinds; keep them stable.
enum class LayerKind : std::uint32_t {
  dense = 1,
  conv2d = 2,
  pool2d = 3,
  batch_norm = 4,
  activation = 5,
  flatten = 6,
  dueling = 7,
};

std::string to_string(LayerKind kind);

/// Base for hand-differentiated layers. forward() caches what backward()
/// needs; backward() overwrites parameter gradients and returns dJ/dinput.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  /// Per-sample output shape for a per-sample input shape. Throws
  /// std::invalid_argument when the input cannot be processed.
  virtual Tensor::Shape output_shape(const Tensor::Shape& input) const = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Non-trainable persistent state (batch-norm running statistics).
  virtual std::vector<Tensor*> buffers() { return {}; }
  /// Integer hyperparameters written to checkpoints.
  virtual std::vector<std::int64_t> attributes() const = 0;

  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string describe() const { return to_string(kind()); }

  /// Layers may skip dJ/dinput when nothing consumes it (the first layer of
  /// a network during training) and return an empty tensor instead.
  void set_input_grad(bool needed) { input_grad_ = needed; }

 protected:
  bool input_grad_ = true;
};

/// Uniform Glorot initialisation in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& weights, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// z = x W + b, a = f(z). Input [B x in], weights [in x out].
class Dense : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, Activation activation = Activation::identity);

  LayerKind kind() const override { return LayerKind::dense; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;
  std::vector<Parameter*> parameters() override { return {&weights_, &bias_}; }
  std::vector<std::int64_t> attributes() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  std::string describe() const override;

  void initialize(Rng& rng);
  Parameter& weights() { return weights_; }
  Parameter& bias() { return bias_; }
  Activation activation() const { return activation_; }

 private:
  std::size_t in_;
  std::size_t out_;
  Activation activation_;
  Parameter weights_;
  Parameter bias_;
  Tensor input_;
  Tensor pre_activation_;
  bool cached_ = false;
};

namespace detail {
struct Nonzero {
  std::size_t sample;
  std::size_t index;  // c * H * W + y * W + x
  double value;
};
}  // namespace detail

/// Cross-correlation over [B x C x H x W] with zero padding.
/// Output side: floor((W - k + 2 P) / S) + 1.
class Conv2d : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
         std::size_t padding = 0);

  LayerKind kind() const override { return LayerKind::conv2d; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;
  std::vector<Parameter*> parameters() override { return {&filters_, &bias_}; }
  std::vector<std::int64_t> attributes() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  std::string describe() const override;

  void initialize(Rng& rng);
  Parameter& filters() { return filters_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_channels_;
  std::size_t out_channels_;
  std::size_t kernel_;
  std::size_t stride_;
  std::size_t padding_;
  Parameter filters_;  // [F x C x k x k]
  Parameter bias_;     // [F]
  Tensor::Shape input_shape_;
  // Mostly-zero batches (preprocessed frames) scatter each nonzero input into
  // the outputs it touches instead of building im2col columns.
  bool sparse_ = false;
  std::vector<detail::Nonzero> nonzeros_;
  AlignedBuffer cols_;  // im2col of every sample in the last dense forward batch
  bool cached_ = false;
};

enum class PoolMode : std::int64_t { max = 0, avg = 1 };

/// Window pooling without padding; max mode remembers the argmax position.
class Pool2d : public Layer {
 public:
  Pool2d(PoolMode mode, std::size_t window, std::size_t stride);

  LayerKind kind() const override { return LayerKind::pool2d; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;
  std::vector<std::int64_t> attributes() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Pool2d>(*this); }

 private:
  PoolMode mode_;
  std::size_t window_;
  std::size_t stride_;
  Tensor::Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

/// Batch normalisation with a learned affine restore x~ = m * x^ + n.
/// Rank-2 inputs normalise per feature over the batch; rank-4 inputs per
/// channel over batch and spatial positions. Variance is the population one.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(std::size_t features, double eps = 1e-5, double momentum = 0.99);

  LayerKind kind() const override { return LayerKind::batch_norm; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;
  std::vector<Parameter*> parameters() override { return {&scale_, &shift_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
  std::vector<std::int64_t> attributes() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  Parameter& scale() { return scale_; }
  Parameter& shift() { return shift_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  double eps() const { return eps_; }
  double momentum() const { return momentum_; }
  /// x^ from the last forward pass (before the affine restore).
  const Tensor& normalized() const { return normalized_; }

 private:
  std::size_t features_;
  double eps_;
  double momentum_;
  Parameter scale_;
  Parameter shift_;
  Tensor running_mean_;
  Tensor running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
  Mode mode_ = Mode::train;
  bool cached_ = false;
};

class ActivationLayer : public Layer {
 public:
  explicit ActivationLayer(Activation activation) : activation_(activation) {}

  LayerKind kind() const override { return LayerKind::activation; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override { return input; }
  std::vector<std::int64_t> attributes() const override { return {static_cast<std::int64_t>(activation_)}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(*this); }
  std::string describe() const override { return to_string(activation_); }

 private:
  Activation activation_;
  Tensor input_;
  bool cached_ = false;
};

class Flatten : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::flatten; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override { return {shape_size(input)}; }
  std::vector<std::int64_t> attributes() const override { return {}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Tensor::Shape input_shape_;
};

enum class DuelingMode : std::int64_t { sum = 0, mean_subtract = 1 };

DuelingMode dueling_mode_from_string(const std::string& name);
std::string to_string(DuelingMode mode);

/// q_a = v + A_a, or v + A_a - mean(A) with mean_subtract. v and A are [B x 1]
/// and [B x n]; the result is [B x n].
Tensor dueling_aggregate(const Tensor& value, const Tensor& advantage, DuelingMode mode);

/// Parallel value (-> 1) and advantage (-> n_actions) linear streams over
/// shared features, combined by dueling_aggregate.
class DuelingHead : public Layer {
 public:
  DuelingHead(std::size_t in, std::size_t n_actions, DuelingMode mode = DuelingMode::sum);

  LayerKind kind() const override { return LayerKind::dueling; }
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  Tensor::Shape output_shape(const Tensor::Shape& input) const override;
  std::vector<Parameter*> parameters() override;
  std::vector<std::int64_t> attributes() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DuelingHead>(*this); }
  std::string describe() const override;

  void initialize(Rng& rng);
  DuelingMode mode() const { return mode_; }
  Dense& value_stream() { return value_; }
  Dense& advantage_stream() { return advantage_; }
  const Tensor& last_value() const { return last_value_; }
  const Tensor& last_advantage() const { return last_advantage_; }

 private:
  std::size_t n_actions_;
  DuelingMode mode_;
  Dense value_;
  Dense advantage_;
  Tensor last_value_;
  Tensor last_advantage_;
};

}  // namespace rlab
