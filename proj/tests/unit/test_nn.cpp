#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "../common/layer_checks.hpp"
#include "rlab/checkpoint.hpp"
#include "rlab/gradcheck.hpp"
#include "rlab/layers.hpp"
#include "rlab/network.hpp"
#include "rlab/optim.hpp"

using namespace rlab;
using rlab::testing::random_tensor;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "rlab_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Network small_net(bool bn, Rng& rng) {
  Network net({2, 6, 6});
  net.emplace<Conv2d>(2, 3, 3, 1, 0);
  if (bn) net.emplace<BatchNorm>(3);
  net.emplace<ActivationLayer>(Activation::relu);
  net.emplace<Pool2d>(PoolMode::max, 2, 2);
  net.emplace<Flatten>();
  net.emplace<Dense>(12, 5, Activation::tanh);
  net.emplace<DuelingHead>(5, 2, DuelingMode::mean_subtract);
  net.initialize(rng);
  return net;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("activation values") {
  const Tensor x = Tensor::vector({-3, 2, 0});
  const Tensor relu = activation_forward(x, Activation::relu);
  CHECK(relu[0] == 0.0);
  CHECK(relu[1] == 2.0);
  CHECK(activation_forward(Tensor::vector({0}), Activation::sigmoid)[0] == 0.5);
  CHECK(activation_forward(Tensor::vector({0}), Activation::tanh)[0] == 0.0);
  CHECK(activation_grad(Tensor::vector({0}), Activation::relu)[0] == 0.0);

  const double analytic = activation_grad(Tensor::vector({0}), Activation::sigmoid)[0];
  CHECK(analytic == 0.25);
  const Tensor numeric = finite_difference_grad(
      [](const Tensor& t) { return activation_forward(t, Activation::sigmoid)[0]; }, Tensor::vector({0}));
  CHECK(std::abs(numeric[0] - analytic) < 1e-8);
}

TEST_CASE("mse loss") {
  const auto r = mse_loss(Tensor::vector({1, 1}), Tensor::vector({1, 2}));
  CHECK(r.loss == 0.5);
  CHECK(r.grad == Tensor::vector({0, -1}));
  const auto same = mse_loss(Tensor::vector({3, 4}), Tensor::vector({3, 4}));
  CHECK(same.loss == 0.0);
  CHECK(same.grad == Tensor::vector({0, 0}));
  CHECK_THROWS_AS(mse_loss(Tensor::vector({1}), Tensor::vector({1, 2})), std::invalid_argument);
}

TEST_CASE("dense examples") {
  Dense d(2, 1, Activation::identity);
  d.weights().value = Tensor({2, 1}, {1.0, 1.0});
  d.bias().value = Tensor({1}, {0.0});
  CHECK(d.forward(Tensor({1, 2}, {2.0, 3.0}), Mode::train)[0] == 5.0);
  d.backward(Tensor({1, 1}, {0.0}));
  for (double g : d.weights().grad.data()) CHECK(g == 0.0);
  for (double g : d.bias().grad.data()) CHECK(g == 0.0);

  Dense fresh(2, 1);
  CHECK_THROWS_AS(fresh.backward(Tensor({1, 1})), std::logic_error);
}

TEST_CASE("conv examples") {
  Conv2d conv(1, 1, 1, 1, 0);
  conv.filters().value = Tensor({1, 1, 1, 1}, {2.0});
  const Tensor out = conv.forward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), Mode::train);
  CHECK(out == Tensor({1, 1, 2, 2}, {2, 4, 6, 8}));

  Conv2d big(4, 8, 8, 4, 0);
  CHECK(big.output_shape({4, 84, 84}) == Tensor::Shape{8, 20, 20});
  CHECK_THROWS_AS(big.output_shape({3, 84, 84}), std::invalid_argument);
  CHECK_THROWS_AS(big.output_shape({4, 6, 6}), std::invalid_argument);

  SUBCASE("all-zero input gives bias-only output") {
    Rng rng(1);
    Conv2d c(2, 3, 3, 1, 1);
    c.initialize(rng);
    c.bias().value = Tensor({3}, {0.5, -1.0, 2.0});
    const Tensor z = c.forward(Tensor({1, 2, 4, 4}), Mode::train);
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(z.at(0, f, i, j) == c.bias().value[f]);
  }
}

TEST_CASE("conv on mostly-zero input matches a direct sum") {
  Rng rng(21);
  for (std::size_t padding : {0, 1}) {
    Conv2d conv(3, 4, 8, 4, padding);
    conv.initialize(rng);
    conv.bias().value = random_tensor({4}, rng);
    Tensor x({2, 3, 30, 30});
    for (double& v : x.data()) v = rng.uniform() < 0.03 ? rng.uniform(0.5, 1.5) : 0.0;
    const Tensor y = conv.forward(x, Mode::train);
    const std::size_t side = (30 - 8 + 2 * padding) / 4 + 1;
    REQUIRE(y.shape() == Tensor::Shape{2, 4, side, side});
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t f = 0; f < 4; ++f)
        for (std::size_t oh = 0; oh < side; ++oh)
          for (std::size_t ow = 0; ow < side; ++ow) {
            double expected = conv.bias().value[f];
            for (std::size_t c = 0; c < 3; ++c)
              for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) {
                  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(oh * 4 + i) - pad;
                  const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(ow * 4 + j) - pad;
                  if (r < 0 || q < 0 || r >= 30 || q >= 30) continue;
                  expected += conv.filters().value[((f * 3 + c) * 8 + i) * 8 + j] * x.at(n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
                }
            CHECK(std::abs(y.at(n, f, oh, ow) - expected) < 1e-12);
          }
  }
}

TEST_CASE("pool examples") {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Pool2d maxp(PoolMode::max, 2, 2);
  CHECK(maxp.forward(x, Mode::train)[0] == 4.0);
  CHECK(maxp.backward(Tensor({1, 1, 1, 1}, {1.0})) == Tensor({1, 1, 2, 2}, {0, 0, 0, 1}));
  Pool2d avgp(PoolMode::avg, 2, 2);
  CHECK(avgp.forward(x, Mode::train)[0] == 2.5);
  CHECK(avgp.backward(Tensor({1, 1, 1, 1}, {1.0})) == Tensor({1, 1, 2, 2}, {0.25, 0.25, 0.25, 0.25}));
}

TEST_CASE("batch norm examples") {
  BatchNorm bn(1, 0.0);
  const Tensor out = bn.forward(Tensor({3, 1}, {1, 2, 3}), Mode::train);
  CHECK(out[0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(out[1] == doctest::Approx(0.0));
  CHECK(out[2] == doctest::Approx(1.2247448714).epsilon(1e-9));

  SUBCASE("restore identity") {
    Rng rng(4);
    const Tensor x = random_tensor({16, 3}, rng, -2.0, 5.0);
    BatchNorm restore(3, 0.0);
    for (std::size_t f = 0; f < 3; ++f) {
      double mean = 0.0, var = 0.0;
      for (std::size_t b = 0; b < 16; ++b) mean += x.at(b, f) / 16.0;
      for (std::size_t b = 0; b < 16; ++b) var += (x.at(b, f) - mean) * (x.at(b, f) - mean) / 16.0;
      restore.scale().value[f] = std::sqrt(var);
      restore.shift().value[f] = mean;
    }
    const Tensor y = restore.forward(x, Mode::train);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-9);
  }
  SUBCASE("batch of one is rejected in training") {
    BatchNorm one(2);
    CHECK_THROWS_AS(one.forward(Tensor({1, 2}), Mode::train), std::invalid_argument);
    CHECK_NOTHROW(one.forward(Tensor({1, 2}), Mode::infer));
  }
  SUBCASE("running statistics follow an exponential moving average") {
    BatchNorm run(1, 1e-5, 0.9);
    run.forward(Tensor({2, 1}, {1.0, 3.0}), Mode::train);
    CHECK(run.running_mean()[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
    CHECK(run.running_var()[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
    const Tensor y = run.forward(Tensor({1, 1}, {2.0}), Mode::infer);
    CHECK(y[0] == doctest::Approx((2.0 - 0.2) / std::sqrt(1.0 + 1e-5)));
  }
}

TEST_CASE("every layer passes the finite-difference check") {
  Rng rng(2024);
  for (const auto& check : rlab::testing::layer_gradient_checks()) {
    CAPTURE(check.name);
    for (int trial = 0; trial < 3; ++trial) CHECK(check.run(rng).worst() < 1e-4);
  }
}

TEST_CASE("finite difference oracle") {
  const Tensor g = finite_difference_grad([](const Tensor& t) { return t[0] * t[0]; }, Tensor::vector({3}));
  CHECK(std::abs(g[0] - 6.0) < 1e-6);
  const Tensor z = finite_difference_grad([](const Tensor&) { return 7.0; }, Tensor::vector({1, 2, 3}));
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("network composition equals chained layer backward") {
  Rng rng(6);
  Network net({3});
  net.emplace<Dense>(3, 4, Activation::tanh);
  net.emplace<Dense>(4, 2, Activation::sigmoid);
  net.initialize(rng);
  const Tensor x = random_tensor({2, 3}, rng);
  const Tensor g = random_tensor({2, 2}, rng);
  net.forward(x, Mode::train);
  const Tensor end_to_end = net.backward(g);

  Dense a = static_cast<Dense&>(net.layer(0));
  Dense b = static_cast<Dense&>(net.layer(1));
  b.forward(a.forward(x, Mode::train), Mode::train);
  const Tensor chained = a.backward(b.backward(g));
  for (std::size_t i = 0; i < chained.size(); ++i) CHECK(std::abs(chained[i] - end_to_end[i]) < 1e-10);

  SUBCASE("forward is deterministic") { CHECK(net.forward(x, Mode::infer) == net.forward(x, Mode::infer)); }
}

TEST_CASE("network rejects incompatible layers by name") {
  Network net({4, 10, 10});
  net.emplace<Conv2d>(4, 8, 3, 1, 0);
  try {
    net.emplace<Conv2d>(3, 8, 3, 1, 0);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("sgd") {
  std::vector<double> w{1.0};
  sgd_step(w, std::vector<double>{2.0}, 0.1);
  CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));
  sgd_step(w, std::vector<double>{0.0}, 0.1);
  CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-15));

  std::vector<double> x{0.0};
  double previous_gap = 3.0;
  for (int k = 1; k <= 20; ++k) {
    sgd_step(x, std::vector<double>{x[0] - 3.0}, 0.1);
    const double gap = 3.0 - x[0];
    CHECK(gap < previous_gap);
    CHECK(gap == doctest::Approx(3.0 * std::pow(0.9, k)));
    previous_gap = gap;
  }
  CHECK(std::abs(x[0] - 3.0) < 0.5);  // 3 * 0.9^20 = 0.365

  SUBCASE("linear in the gradient") {
    std::vector<double> one{0.3}, two{0.3};
    sgd_step(one, std::vector<double>{0.5 + 0.25}, 0.1);
    sgd_step(two, std::vector<double>{0.5}, 0.1);
    sgd_step(two, std::vector<double>{0.25}, 0.1);
    CHECK(one[0] == doctest::Approx(two[0]).epsilon(1e-15));
  }
}

TEST_CASE("rmsprop") {
  std::vector<double> w{0.0}, acc{0.0};
  rmsprop_step(w, std::vector<double>{1.0}, acc, 0.01, 0.9, 1e-8);
  CHECK(acc[0] == doctest::Approx(0.1));
  CHECK(w[0] == doctest::Approx(-0.01 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(-0.031623).epsilon(1e-4));

  std::vector<double> still{1.5}, still_acc{0.0};
  for (int i = 0; i < 100; ++i) rmsprop_step(still, std::vector<double>{0.0}, still_acc, 0.01, 0.9, 1e-8);
  CHECK(still[0] == 1.5);

  std::vector<double> c{0.0}, c_acc{0.0};
  double last = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double before = c[0];
    rmsprop_step(c, std::vector<double>{-4.0}, c_acc, 0.01, 0.9, 1e-8);
    last = c[0] - before;
  }
  CHECK(std::abs(last - 0.01) < 0.05 * 0.01);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(9);
  for (bool bn : {false, true}) {
    Network net = small_net(bn, rng);
    net.forward(random_tensor({4, 2, 6, 6}, rng), Mode::train);  // moves batch-norm statistics
    const auto path = temp_file(bn ? "bn.bin" : "plain.bin");
    save_network(net, path);
    Network other = small_net(bn, rng);
    load_network(other, path);
    const auto a = net.state_tensors();
    const auto b = other.state_tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  }
}

TEST_CASE("checkpoint rejects mismatches and corruption") {
  Rng rng(10);
  Network plain = small_net(false, rng);
  const auto path = temp_file("mismatch.bin");
  save_network(plain, path);
  Network with_bn = small_net(true, rng);
  CHECK_THROWS_AS(load_network(with_bn, path), CheckpointError);

  {
    std::ofstream out(temp_file("garbage.bin"), std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(read_checkpoint(temp_file("garbage.bin")), CheckpointError);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  CHECK_THROWS_AS(read_checkpoint(path), CheckpointError);
}

TEST_CASE("copy_state_from is bit exact and requires equal architectures") {
  Rng rng(12);
  Network a = small_net(true, rng);
  Network b = small_net(true, rng);
  b.copy_state_from(a);
  const auto sa = a.state_tensors();
  const auto sb = b.state_tensors();
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(*sa[i] == *sb[i]);
  Network c = small_net(false, rng);
  CHECK_THROWS(c.copy_state_from(a));
}

}
