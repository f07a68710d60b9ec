#include "rlab/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rlab {

// ---------------------------------------------------------------- PackedObservation

PackedObservation::PackedObservation(const Tensor& t) : shape_(t.shape()), size_(t.size()) {
  binary_ = std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0 || v == 1.0; });
  if (!binary_) {
    dense_.assign(t.data().begin(), t.data().end());
    return;
  }
  bits_.assign((size_ + 63) / 64, 0);
  for (std::size_t i = 0; i < size_; ++i) {
    if (t[i] == 1.0) bits_[i / 64] |= std::uint64_t{1} << (i % 64);
  }
}

void PackedObservation::unpack_into(double* out) const {
  if (!binary_) {
    std::copy(dense_.begin(), dense_.end(), out);
    return;
  }
  for (std::size_t w = 0; w < bits_.size(); ++w) {
    const std::uint64_t word = bits_[w];
    const std::size_t n = std::min<std::size_t>(64, size_ - w * 64);
    double* dst = out + w * 64;
    if (word == 0) {
      std::fill(dst, dst + n, 0.0);
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] = static_cast<double>((word >> j) & 1U);
  }
}

Tensor PackedObservation::unpack() const {
  Tensor t(shape_);
  unpack_into(t.raw());
  return t;
}

// ---------------------------------------------------------------- ReplayPool

ReplayPool::ReplayPool(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayPool: capacity must be >= 1");
  slots_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

std::size_t ReplayPool::push(const Transition& t) {
  if (t.state.shape() != t.next_state.shape()) {
    throw std::invalid_argument("ReplayPool: state and next_state shapes differ");
  }
  if (size_ == 0 && observation_shape_.empty()) {
    observation_shape_ = t.state.shape();
  } else if (t.state.shape() != observation_shape_) {
    throw std::invalid_argument("ReplayPool: observation shape " + shape_string(t.state.shape()) +
                                " differs from pool shape " + shape_string(observation_shape_));
  }
  Stored stored{PackedObservation(t.state), PackedObservation(t.next_state), t.action, t.reward, t.terminal};
  const std::size_t slot = cursor_;
  if (slot == slots_.size()) {
    slots_.push_back(std::move(stored));
  } else {
    slots_[slot] = std::move(stored);
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  return slot;
}

Transition ReplayPool::get(std::size_t slot) const {
  if (slot >= size_) throw std::out_of_range("ReplayPool: slot " + std::to_string(slot) + " is empty");
  const Stored& s = slots_[slot];
  return {s.state.unpack(), s.action, s.next_state.unpack(), s.reward, s.terminal};
}

std::vector<Transition> ReplayPool::contents() const {
  std::vector<Transition> out;
  const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
  for (std::size_t k = 0; k < size_; ++k) out.push_back(get((oldest + k) % capacity_));
  return out;
}

TransitionBatch ReplayPool::gather(std::span<const std::size_t> slots) const {
  if (slots.empty()) throw std::invalid_argument("ReplayPool::gather: empty slot list");
  TransitionBatch batch;
  Tensor::Shape shape{slots.size()};
  shape.insert(shape.end(), observation_shape_.begin(), observation_shape_.end());
  batch.states = Tensor(shape);
  batch.next_states = Tensor(shape);
  const std::size_t stride = shape_size(observation_shape_);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k] >= size_) throw std::out_of_range("ReplayPool::gather: slot out of range");
    const Stored& s = slots_[slots[k]];
    s.state.unpack_into(batch.states.raw() + k * stride);
    s.next_state.unpack_into(batch.next_states.raw() + k * stride);
    batch.indices.push_back(slots[k]);
    batch.actions.push_back(s.action);
    batch.rewards.push_back(s.reward);
    batch.terminals.push_back(s.terminal);
  }
  return batch;
}

TransitionBatch ReplayPool::sample_uniform(std::size_t batch, Rng& rng) const {
  if (batch == 0) throw std::invalid_argument("sample_uniform: batch must be >= 1");
  if (batch > size_) {
    throw std::invalid_argument("sample_uniform: batch of " + std::to_string(batch) + " requested from a pool of " +
                                std::to_string(size_) + "; wait for warm-up");
  }
  std::vector<std::size_t> slots(batch);
  for (auto& s : slots) s = rng.index(size_);
  return gather(slots);
}

// ---------------------------------------------------------------- SumTree

SumTree::SumTree(std::size_t capacity) : leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))) {
  nodes_.assign(2 * leaves_, 0.0);
}

void SumTree::update(std::size_t index, double priority) {
  if (index >= leaves_) throw std::out_of_range("SumTree::update: leaf index out of range");
  if (!(priority >= 0.0) || !std::isfinite(priority)) {
    throw std::invalid_argument("SumTree::update: priority must be finite and >= 0");
  }
  std::size_t node = leaves_ + index;
  nodes_[node] = priority;
  for (node /= 2; node >= 1; node /= 2) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
}

std::size_t SumTree::find_prefix(double x) const {
  if (!(total() > 0.0)) throw std::invalid_argument("SumTree::find_prefix: total priority is zero");
  if (!(x >= 0.0 && x < total())) throw std::invalid_argument("SumTree::find_prefix: x outside [0, total)");
  std::size_t node = 1;
  while (node < leaves_) {
    const std::size_t left = 2 * node;
    const double left_sum = nodes_[left];
    const double right_sum = nodes_[left + 1];
    // Rounding in the stored sums can push x past a subtree boundary; the
    // clamps keep the descent inside subtrees with positive mass.
    if (x < left_sum || right_sum <= 0.0) {
      if (x >= left_sum) x = std::nextafter(left_sum, 0.0);
      node = left;
    } else {
      x -= left_sum;
      if (x >= right_sum) x = std::nextafter(right_sum, 0.0);
      node = left + 1;
    }
  }
  return node - leaves_;
}

// ---------------------------------------------------------------- PER helpers

void PerParams::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("PerParams: alpha must be >= 0");
  if (!(eps_priority >= 0.0)) throw std::invalid_argument("PerParams: eps_priority must be >= 0");
  if (!(beta_initial > 0.0 && beta_initial <= 1.0)) throw std::invalid_argument("PerParams: beta_initial must lie in (0,1]");
  if (beta_anneal_steps < 1) throw std::invalid_argument("PerParams: beta_anneal_steps must be >= 1");
  if (!(initial_max_priority > 0.0)) throw std::invalid_argument("PerParams: initial_max_priority must be positive");
}

double priority_from_td_error(double delta, const PerParams& params) { return std::abs(delta) + params.eps_priority; }

double beta_schedule(std::int64_t step, const PerParams& params) {
  if (step <= 0) return params.beta_initial;
  if (step >= params.beta_anneal_steps) return 1.0;
  const double frac = static_cast<double>(step) / static_cast<double>(params.beta_anneal_steps);
  return params.beta_initial + (1.0 - params.beta_initial) * frac;
}

std::vector<double> is_weights(std::span<const double> probabilities, std::size_t n, double beta) {
  if (n == 0) throw std::invalid_argument("is_weights: pool size must be >= 1");
  std::vector<double> w(probabilities.size());
  double max_w = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double p = probabilities[i];
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("is_weights: probabilities must lie in (0,1]");
    w[i] = std::pow(static_cast<double>(n) * p, -beta);
    max_w = std::max(max_w, w[i]);
  }
  for (double& x : w) x /= max_w;
  return w;
}

// ---------------------------------------------------------------- PrioritizedReplay

PrioritizedReplay::PrioritizedReplay(std::size_t capacity, PerParams params)
    : params_(params), pool_(capacity), tree_(capacity), priorities_(capacity, 0.0) {
  params_.validate();
  max_priority_ = params_.initial_max_priority;
}

std::size_t PrioritizedReplay::push(const Transition& t) {
  const std::size_t slot = pool_.push(t);
  set_priority(slot, max_priority_);
  return slot;
}

void PrioritizedReplay::set_priority(std::size_t slot, double priority) {
  if (slot >= pool_.size()) throw std::out_of_range("PrioritizedReplay: slot out of range");
  if (!(priority >= 0.0) || !std::isfinite(priority)) throw std::invalid_argument("PrioritizedReplay: bad priority");
  priorities_[slot] = priority;
  max_priority_ = std::max(max_priority_, priority);
  tree_.update(slot, std::pow(priority, params_.alpha));
}

void PrioritizedReplay::update_priorities(std::span<const std::size_t> slots, std::span<const double> td_errors) {
  if (slots.size() != td_errors.size()) throw std::invalid_argument("update_priorities: size mismatch");
  for (std::size_t k = 0; k < slots.size(); ++k) set_priority(slots[k], priority_from_td_error(td_errors[k], params_));
}

double PrioritizedReplay::probability(std::size_t slot) const { return tree_.leaf(slot) / tree_.total(); }

TransitionBatch PrioritizedReplay::sample(std::size_t batch, Rng& rng) const {
  if (pool_.empty()) throw std::invalid_argument("PrioritizedReplay::sample: pool is empty");
  if (batch == 0) throw std::invalid_argument("PrioritizedReplay::sample: batch must be >= 1");
  const double total = tree_.total();
  const double segment = total / static_cast<double>(batch);
  std::vector<std::size_t> slots(batch);
  for (std::size_t k = 0; k < batch; ++k) {
    double x = (static_cast<double>(k) + rng.uniform()) * segment;
    if (x >= total) x = std::nextafter(total, 0.0);
    slots[k] = tree_.find_prefix(x);
  }
  TransitionBatch out = pool_.gather(slots);
  out.probabilities.reserve(batch);
  for (std::size_t slot : slots) out.probabilities.push_back(probability(slot));
  return out;
}

}  // namespace rlab
