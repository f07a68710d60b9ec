#include "rlab/network.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace rlab {

Network::Network(Tensor::Shape input_shape) : input_shape_(input_shape), output_shape_(std::move(input_shape)) {}

Network::Network(const Network& other) : input_shape_(other.input_shape_), output_shape_(other.output_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Layer& Network::add(std::unique_ptr<Layer> layer) {
  try {
    output_shape_ = layer->output_shape(output_shape_);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("layer " + std::to_string(layers_.size()) + " (" + layer->describe() +
                                ") rejects its input: " + e.what());
  }
  layers_.push_back(std::move(layer));
  return *layers_.back();
}

void Network::initialize(Rng& rng) {
  for (auto& layer : layers_) {
    if (auto* dense = dynamic_cast<Dense*>(layer.get())) dense->initialize(rng);
    else if (auto* conv = dynamic_cast<Conv2d*>(layer.get())) conv->initialize(rng);
    else if (auto* head = dynamic_cast<DuelingHead*>(layer.get())) head->initialize(rng);
  }
}

Tensor Network::forward(const Tensor& batch, Mode mode) {
  if (batch.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), batch.shape().begin() + 1)) {
    throw std::invalid_argument("Network: expected batch of " + shape_string(input_shape_) + ", got " +
                                shape_string(batch.shape()));
  }
  Tensor x = batch;
  for (auto& layer : layers_) x = layer->forward(x, mode);
  return x;
}

Tensor Network::backward(const Tensor& grad_out, bool input_grad) {
  if (layers_.empty()) return grad_out;
  layers_.front()->set_input_grad(input_grad);
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    auto params = layer->parameters();
    out.insert(out.end(), params.begin(), params.end());
  }
  return out;
}

std::vector<Tensor*> Network::state_tensors() {
  std::vector<Tensor*> out;
  for (auto& layer : layers_) {
    for (Parameter* p : layer->parameters()) out.push_back(&p->value);
    for (Tensor* t : layer->buffers()) out.push_back(t);
  }
  return out;
}

std::vector<const Tensor*> Network::state_tensors() const {
  auto tensors = const_cast<Network*>(this)->state_tensors();
  return {tensors.begin(), tensors.end()};
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    for (const Parameter* p : layer->parameters()) total += p->value.size();
  }
  return total;
}

bool Network::same_architecture(const Network& other) const {
  if (input_shape_ != other.input_shape_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->kind() != other.layers_[i]->kind() ||
        layers_[i]->attributes() != other.layers_[i]->attributes()) {
      return false;
    }
  }
  return true;
}

void Network::copy_state_from(const Network& other) {
  if (!same_architecture(other)) throw std::invalid_argument("Network::copy_state_from: architecture mismatch");
  auto dst = state_tensors();
  auto src = other.state_tensors();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = *src[i];
}

std::string Network::summary() const {
  std::ostringstream out;
  Tensor::Shape shape = input_shape_;
  out << "input " << shape_string(shape) << '\n';
  for (const auto& layer : layers_) {
    shape = layer->output_shape(shape);
    out << "  " << layer->describe() << " -> " << shape_string(shape) << '\n';
  }
  out << "parameters: " << parameter_count() << '\n';
  return out.str();
}

}  // namespace rlab
