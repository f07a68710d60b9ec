#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "rlab/replay.hpp"

using namespace rlab;

namespace {

Transition item(double id, std::size_t action = 0) {
  return {Tensor({2}, {id, 0.5}), action, Tensor({2}, {id + 1.0, 0.25}), id, false};
}

Transition binary_item(Rng& rng) {
  Tensor s({4, 9, 9});
  Tensor n({4, 9, 9});
  for (double& v : s.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  for (double& v : n.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  return {s, 1, n, 0.1, true};
}

std::size_t linear_prefix(const std::vector<double>& leaves, double x) {
  double before = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i] > 0.0 && x < before + leaves[i]) return i;
    before += leaves[i];
  }
  return leaves.size();
}

}  // namespace

TEST_SUITE("replay") {

TEST_CASE("pool is a FIFO ring") {
  ReplayPool pool(2);
  pool.push(item(1));
  CHECK(pool.size() == 1);
  pool.push(item(2));
  pool.push(item(3));
  const auto c = pool.contents();
  REQUIRE(c.size() == 2);
  CHECK(c[0].reward == 2.0);
  CHECK(c[1].reward == 3.0);
}

TEST_CASE("pool at the full-scale capacity stops growing") {
  const std::size_t capacity = 300000;
  ReplayPool pool(capacity);
  const Transition t{Tensor({1}, {1.0}), 0, Tensor({1}, {0.0}), 0.0, false};
  for (std::size_t i = 0; i < capacity + 1; ++i) pool.push(t);
  CHECK(pool.size() == capacity);
}

TEST_CASE("pool rejects inconsistent observation shapes") {
  ReplayPool pool(4);
  pool.push(item(1));
  CHECK_THROWS_AS(pool.push({Tensor({3}), 0, Tensor({3}), 0.0, false}), std::invalid_argument);
}

TEST_CASE("binary observations round-trip through bit packing") {
  Rng rng(1);
  ReplayPool pool(8);
  std::vector<Transition> pushed;
  for (int i = 0; i < 5; ++i) pool.push(pushed.emplace_back(binary_item(rng)));
  const auto c = pool.contents();
  for (std::size_t i = 0; i < pushed.size(); ++i) {
    CHECK(c[i].state == pushed[i].state);
    CHECK(c[i].next_state == pushed[i].next_state);
    CHECK(c[i].terminal);
  }
  CHECK(PackedObservation(pushed[0].state).is_binary());
  CHECK_FALSE(PackedObservation(Tensor({2}, {0.5, 1.0})).is_binary());
}

TEST_CASE("uniform sampling") {
  Rng rng(2);
  ReplayPool one(4);
  one.push(item(7));
  const auto b = one.sample_uniform(1, rng);
  CHECK(b.rewards[0] == 7.0);
  CHECK(b.states.shape() == Tensor::Shape{1, 2});

  ReplayPool small(64);
  for (int i = 0; i < 64; ++i) small.push(item(i));
  CHECK_THROWS_AS(small.sample_uniform(128, rng), std::invalid_argument);

  ReplayPool pool(1000);
  for (int i = 0; i < 1000; ++i) pool.push(item(i));
  std::vector<std::size_t> counts(1000);
  const int batches = 20000;
  for (int k = 0; k < batches; ++k) {
    for (std::size_t slot : pool.sample_uniform(128, rng).indices) ++counts[slot];
  }
  const double expected = batches * 128.0 / 1000.0;
  for (std::size_t c : counts) CHECK(std::abs(c - expected) < 0.2 * expected);
}

TEST_CASE("sum tree examples") {
  SumTree tree(4);
  for (std::size_t i = 0; i < 4; ++i) tree.update(i, static_cast<double>(i + 1));
  CHECK(tree.total() == 10.0);
  CHECK(tree.find_prefix(0.5) == 0);
  CHECK(tree.find_prefix(2.5) == 1);
  CHECK(tree.find_prefix(9.99) == 3);
  tree.update(0, 5.0);
  CHECK(tree.total() == 14.0);
  CHECK_THROWS_AS(tree.find_prefix(14.0), std::invalid_argument);
  CHECK_THROWS_AS(tree.update(1, -1.0), std::invalid_argument);

  SumTree zero(4);
  CHECK(zero.total() == 0.0);
  CHECK_THROWS_AS(zero.find_prefix(0.0), std::invalid_argument);

  SumTree odd(5);
  CHECK(odd.capacity() == 8);
}

TEST_CASE("sum tree agrees with a linear scan") {
  Rng rng(3);
  SumTree tree(100);
  std::vector<double> leaves(tree.capacity(), 0.0);
  for (int op = 0; op < 2000; ++op) {
    const std::size_t i = rng.index(100);
    const double p = rng.uniform() < 0.1 ? 0.0 : rng.uniform(0.0, 5.0);
    tree.update(i, p);
    leaves[i] = p;
    const double linear = std::accumulate(leaves.begin(), leaves.end(), 0.0);
    CHECK(std::abs(tree.total() - linear) < 1e-6);
    if (tree.total() > 0.0) {
      const double x = rng.uniform() * tree.total();
      CHECK(tree.find_prefix(x) == linear_prefix(leaves, x));
    }
  }
  const auto& nodes = tree.nodes();
  for (std::size_t n = 1; n < tree.capacity(); ++n) CHECK(std::abs(nodes[n] - nodes[2 * n] - nodes[2 * n + 1]) < 1e-9);
}

TEST_CASE("priorities and weights") {
  PerParams p;
  p.eps_priority = 0.01;
  CHECK(priority_from_td_error(-2.0, p) == doctest::Approx(2.01));
  CHECK(priority_from_td_error(0.0, p) == 0.01);
  p.eps_priority = 0.0;
  CHECK(priority_from_td_error(3.5, p) == 3.5);

  const auto w = is_weights(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 4, 1.0);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == doctest::Approx(0.5));
  CHECK(w[2] == doctest::Approx(1.0 / 3.0));
  CHECK(w[3] == doctest::Approx(0.25));
  for (double x : is_weights(std::vector<double>{0.1, 0.2, 0.7}, 3, 0.0)) CHECK(x == 1.0);
  for (double x : is_weights(std::vector<double>{0.25, 0.25, 0.25}, 4, 0.7)) CHECK(x == 1.0);
  CHECK_THROWS_AS(is_weights(std::vector<double>{0.0, 0.5}, 2, 1.0), std::invalid_argument);

  // Only N * P matters.
  const auto a = is_weights(std::vector<double>{0.1, 0.3}, 10, 0.6);
  const auto b = is_weights(std::vector<double>{0.05, 0.15}, 20, 0.6);
  CHECK(a[0] == doctest::Approx(b[0]));
  CHECK(a[1] == doctest::Approx(b[1]));
}

TEST_CASE("beta schedule") {
  PerParams p;
  p.beta_initial = 0.4;
  p.beta_anneal_steps = 100;
  CHECK(beta_schedule(0, p) == 0.4);
  CHECK(beta_schedule(50, p) == doctest::Approx(0.7));
  CHECK(beta_schedule(1000000000, p) == 1.0);
}

TEST_CASE("prioritized sampling frequencies") {
  Rng rng(4);
  SUBCASE("priorities [1,3] with alpha 1") {
    PerParams p;
    p.alpha = 1.0;
    PrioritizedReplay per(2, p);
    per.push(item(0));
    per.push(item(1));
    per.set_priority(0, 1.0);
    per.set_priority(1, 3.0);
    int heavy = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) heavy += per.sample(1, rng).indices[0] == 1;
    CHECK(std::abs(heavy / double(n) - 0.75) < 0.01);
    CHECK(per.probability(1) == doctest::Approx(0.75));
  }
  SUBCASE("alpha 0 is uniform") {
    PerParams p;
    p.alpha = 0.0;
    PrioritizedReplay per(4, p);
    for (int i = 0; i < 4; ++i) per.push(item(i));
    for (int i = 0; i < 4; ++i) per.set_priority(i, 1.0 + 3.0 * i);
    std::vector<int> counts(4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[per.sample(1, rng).indices[0]];
    for (int c : counts) CHECK(std::abs(c / double(n) - 0.25) < 0.01);
  }
  SUBCASE("single nonzero priority") {
    PrioritizedReplay per(4, PerParams{});
    for (int i = 0; i < 3; ++i) per.push(item(i));
    per.set_priority(0, 0.0);
    per.set_priority(2, 0.0);
    for (int i = 0; i < 1000; ++i) CHECK(per.sample(4, rng).indices == std::vector<std::size_t>{1, 1, 1, 1});
  }
  SUBCASE("empty pool is rejected") {
    PrioritizedReplay per(4, PerParams{});
    CHECK_THROWS(per.sample(1, rng));
  }
}

TEST_CASE("new transitions enter at the maximum priority") {
  PerParams p;
  PrioritizedReplay per(8, p);
  per.push(item(0));
  CHECK(per.priority(0) == p.initial_max_priority);
  const std::vector<std::size_t> slots{0};
  per.update_priorities(slots, std::vector<double>{4.0});
  CHECK(per.priority(0) == doctest::Approx(4.01));
  per.push(item(1));
  CHECK(per.priority(1) == per.max_priority_seen());
  CHECK(per.priority(1) == doctest::Approx(4.01));
  CHECK(per.probability(1) > 0.0);
}

TEST_CASE("sampled probabilities are reported for weight computation") {
  Rng rng(5);
  PerParams p;
  p.alpha = 1.0;
  PrioritizedReplay per(4, p);
  for (int i = 0; i < 4; ++i) per.push(item(i));
  for (int i = 0; i < 4; ++i) per.set_priority(i, i + 1.0);
  const auto batch = per.sample(4, rng);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    CHECK(batch.probabilities[k] == doctest::Approx((batch.indices[k] + 1.0) / 10.0));
  }
}

}
