#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rlab/rng.hpp"
#include "rlab/tensor.hpp"

namespace rlab {

/// One (s, a, s', r, terminal) experience.
struct Transition {
  Tensor state;
  std::size_t action = 0;
  Tensor next_state;
  double reward = 0.0;
  bool terminal = false;
};

/// Observation storage that bit-packs tensors whose entries are all 0 or 1
/// (preprocessed frames) and keeps anything else as doubles.
class PackedObservation {
 public:
  PackedObservation() = default;
  explicit PackedObservation(const Tensor& t);

  const Tensor::Shape& shape() const { return shape_; }
  std::size_t size() const { return size_; }
  bool is_binary() const { return binary_; }

  Tensor unpack() const;
  void unpack_into(double* out) const;

 private:
  Tensor::Shape shape_;
  std::size_t size_ = 0;
  bool binary_ = true;
  std::vector<std::uint64_t> bits_;
  std::vector<double> dense_;
};

/// A sampled minibatch laid out for the network.
struct TransitionBatch {
  std::vector<std::size_t> indices;  // pool slots
  Tensor states;                     // [M x obs...]
  Tensor next_states;                // [M x obs...]
  std::vector<std::size_t> actions;
  std::vector<double> rewards;
  std::vector<bool> terminals;
  std::vector<double> probabilities;  // sampling probability P(i); empty for uniform

  std::size_t size() const { return indices.size(); }
};

/// FIFO ring buffer of transitions.
class ReplayPool {
 public:
  explicit ReplayPool(std::size_t capacity);

  /// Stores a transition, evicting the oldest once full. Returns its slot.
  std::size_t push(const Transition& t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }

  Transition get(std::size_t slot) const;
  /// Stored transitions from oldest to newest.
  std::vector<Transition> contents() const;

  TransitionBatch gather(std::span<const std::size_t> slots) const;

  /// i.i.d. uniform slots over the current contents. Throws
  /// std::invalid_argument when batch > size.
  TransitionBatch sample_uniform(std::size_t batch, Rng& rng) const;

 private:
  struct Stored {
    PackedObservation state;
    PackedObservation next_state;
    std::size_t action = 0;
    double reward = 0.0;
    bool terminal = false;
  };

  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::vector<Stored> slots_;
  Tensor::Shape observation_shape_;
};

/// Complete binary tree over leaf priorities (leaf count rounded up to a power
/// of two). Internal nodes hold the sum of their children.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);

  std::size_t capacity() const { return leaves_; }
  double total() const { return nodes_[1]; }
  double leaf(std::size_t index) const { return nodes_.at(leaves_ + index); }
  /// Node array with the root at 1 and leaves at [capacity, 2 * capacity).
  const std::vector<double>& nodes() const { return nodes_; }

  /// Sets a leaf and recomputes the sums on its root path. Throws on a
  /// negative or non-finite priority.
  void update(std::size_t index, double priority);

  /// Leaf whose cumulative interval [before, before + p) contains x. Throws
  /// std::invalid_argument unless 0 <= x < total and total > 0.
  std::size_t find_prefix(double x) const;

 private:
  std::size_t leaves_;
  std::vector<double> nodes_;
};

struct PerParams {
  double alpha = 0.6;
  double eps_priority = 0.01;
  double beta_initial = 0.4;
  std::int64_t beta_anneal_steps = 100000;
  double initial_max_priority = 1.0;

  void validate() const;
};

/// |delta| + eps_priority.
double priority_from_td_error(double delta, const PerParams& params);

/// Linear from beta_initial at step 0 to 1 at beta_anneal_steps, then 1.
double beta_schedule(std::int64_t step, const PerParams& params);

/// w_i = (N P(i))^-beta normalised by the batch maximum.
std::vector<double> is_weights(std::span<const double> probabilities, std::size_t n, double beta);

/// Proportional prioritized replay: raw priorities p_i are kept per slot and
/// the tree stores p_i^alpha, so prefix sampling draws slot i with
/// probability p_i^alpha / sum_k p_k^alpha.
class PrioritizedReplay {
 public:
  PrioritizedReplay(std::size_t capacity, PerParams params);

  /// Inserts with the largest priority seen so far.
  std::size_t push(const Transition& t);

  /// Stratified proportional sample: one draw in each of `batch` equal
  /// segments of [0, total). Throws when the pool is empty.
  TransitionBatch sample(std::size_t batch, Rng& rng) const;

  /// p_i <- |delta_i| + eps for each sampled slot.
  void update_priorities(std::span<const std::size_t> slots, std::span<const double> td_errors);
  void set_priority(std::size_t slot, double priority);

  std::size_t size() const { return pool_.size(); }
  std::size_t capacity() const { return pool_.capacity(); }
  double priority(std::size_t slot) const { return priorities_.at(slot); }
  double max_priority_seen() const { return max_priority_; }
  double probability(std::size_t slot) const;
  const SumTree& tree() const { return tree_; }
  const ReplayPool& pool() const { return pool_; }
  const PerParams& params() const { return params_; }

 private:
  PerParams params_;
  ReplayPool pool_;
  SumTree tree_;
  std::vector<double> priorities_;
  double max_priority_;
};

}  // namespace rlab
