#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "decra/adam.hpp"
#include "decra/tensor.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace decra;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     bool requires_grad = false, double scale = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale;
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  Tensor out = matmul(eye, b);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out.values()[i] == doctest::Approx(b.values()[i]));

  Tensor s = matmul(Tensor::from({1, 1}, {2}), Tensor::from({1, 1}, {3}));
  CHECK(s.values()[0] == doctest::Approx(6.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor out = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 4; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(std::abs(out.at(i, j) - acc) < 1e-12);
    }
}

TEST_CASE("matmul shape mismatch is a dimension error") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("softmax symmetry and overflow stability") {
  Tensor out = softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (double v : out.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  Tensor big = softmax(Tensor::from({2}, {1000, 1000}), 0);
  CHECK(big.values()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(big.values()[1]));
}

TEST_CASE("softmax matches direct exp/sum and is shift invariant") {
  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tensor out = softmax(x, 0);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::abs(out.values()[i] - std::exp(1.0 + i) / z) < 1e-9);

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor a = random_tensor({4, 5}, rng, false, 3.0);
    std::vector<double> shifted = a.values();
    double c = rng.normal() * 10.0;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 5; ++j) shifted[r * 5 + j] += c;
    Tensor sa = softmax(a, 1);
    Tensor sb = softmax(Tensor::from({4, 5}, shifted), 1);
    for (std::size_t i = 0; i < 20; ++i)
      CHECK(std::abs(sa.values()[i] - sb.values()[i]) < 1e-9);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 5; ++j) sum += sa.at(r, j);
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax rejects bad axis") {
  CHECK_THROWS_AS(softmax(Tensor::zeros({3}), 1), std::invalid_argument);
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 2), std::invalid_argument);
}

TEST_CASE("layer_norm definition cases") {
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor constant = layer_norm(Tensor::full({1, 3}, 5.0), gain, bias);
  for (double v : constant.values()) CHECK(std::abs(v) < 1e-9);

  Tensor out = layer_norm(Tensor::from({1, 3}, {1, 2, 3}), gain, bias);
  double mean = 0.0, var = 0.0;
  for (double v : out.values()) mean += v;
  mean /= 3;
  for (double v : out.values()) var += (v - mean) * (v - mean);
  var /= 3;
  CHECK(std::abs(mean) < 1e-5);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({2, 6}, rng, true);
  Tensor gain = random_tensor({6}, rng, true, 0.5);
  Tensor bias = random_tensor({6}, rng, true, 0.5);
  auto loss_fn = [&]() {
    Tensor w = Tensor::from({2, 6}, std::vector<double>(12, 0.37));
    return sum(mul(layer_norm(x, gain, bias), w)).item();
  };
  Tensor w = Tensor::from({2, 6}, std::vector<double>(12, 0.37));
  backward(sum(mul(layer_norm(x, gain, bias), w)));
  auto res = testing::fd_compare({x, gain, bias}, loss_fn);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("layer_norm rejects mismatched gain") {
  CHECK_THROWS_AS(
      layer_norm(Tensor::zeros({2, 3}), Tensor::zeros({4}), Tensor::zeros({3})),
      std::invalid_argument);
}

TEST_CASE("cross_entropy analytic anchors") {
  Tensor confident = cross_entropy(Tensor::from({1, 2}, {10, -10}),
                                   Tensor::from({1, 2}, {1, 0}));
  CHECK(confident.item() >= 0.0);
  CHECK(confident.item() < 1e-6);

  std::size_t C = 7;
  Tensor uniform = cross_entropy(
      Tensor::zeros({1, C}),
      Tensor::from({1, C}, {1, 0, 0, 0, 0, 0, 0}));
  CHECK(uniform.item() == doctest::Approx(std::log(double(C))));
}

TEST_CASE("cross_entropy matches direct formula on random input") {
  Rng rng(17);
  Tensor logits = random_tensor({4, 5}, rng, false, 2.0);
  std::vector<double> tvals(20);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      tvals[r * 5 + c] = rng.uniform() + 0.01;
      s += tvals[r * 5 + c];
    }
    for (std::size_t c = 0; c < 5; ++c) tvals[r * 5 + c] /= s;
  }
  Tensor target = Tensor::from({4, 5}, tvals);
  double expected = 0.0;
  for (std::size_t r = 0; r < 4; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at(r, c));
    for (std::size_t c = 0; c < 5; ++c)
      expected -= target.at(r, c) * (logits.at(r, c) - std::log(z));
  }
  expected /= 4.0;
  CHECK(std::abs(cross_entropy(logits, target).item() - expected) < 1e-8);
}

TEST_CASE("cross_entropy rejects non-distribution targets") {
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 2}),
                                Tensor::from({1, 2}, {0.7, 0.7})),
                  std::invalid_argument);
}

TEST_CASE("backward basics") {
  Tensor w = Tensor::from({4}, {1, 2, 3, 4}, true);
  backward(sum(w));
  for (double g : w.grad_view()) CHECK(g == doctest::Approx(1.0));

  Tensor v = Tensor::from({2}, {1, 2}, true);
  backward(sum(mul(v, v)));
  CHECK(v.grad_view()[0] == doctest::Approx(2.0));
  CHECK(v.grad_view()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar and accumulates across calls") {
  Tensor w = Tensor::from({2}, {1, 1}, true);
  CHECK_THROWS_AS(backward(scale(w, 2.0)), std::invalid_argument);

  backward(sum(w));
  backward(sum(w));
  CHECK(w.grad_view()[0] == doctest::Approx(2.0));
  w.zero_grad();
  backward(sum(w));
  CHECK(w.grad_view()[0] == doctest::Approx(1.0));
}

TEST_CASE("no recording inside NoGradGuard") {
  Tensor w = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  Tensor out = sum(mul(w, w));
  CHECK_FALSE(out.requires_grad());
}

TEST_CASE("adam first step and zero-grad behaviour") {
  Tensor w = Tensor::scalar(0.0, true);
  std::vector<Tensor> params{w};
  AdamState st = AdamState::init(params, 0.1);
  w.grad()[0] = 1.0;
  adam_step(params, st);
  CHECK(w.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));

  Tensor w2 = Tensor::scalar(1.5, true);
  std::vector<Tensor> params2{w2};
  AdamState st2 = AdamState::init(params2, 0.1);
  w2.zero_grad();
  adam_step(params2, st2);
  CHECK(w2.values()[0] == doctest::Approx(1.5));
}

TEST_CASE("adam converges on a quadratic") {
  Tensor w = Tensor::scalar(0.0, true);
  std::vector<Tensor> params{w};
  AdamState st = AdamState::init(params, 0.1);
  for (int i = 0; i < 100; ++i) {
    Tensor d = sub(w, Tensor::scalar(3.0));
    backward(mul(d, d));
    adam_step(params, st);
  }
  CHECK(std::abs(w.values()[0] - 3.0) < 0.1);
}

TEST_CASE("adam rejects missing grads") {
  Tensor w = Tensor::scalar(0.0, true);
  std::vector<Tensor> params{w};
  AdamState st = AdamState::init(params, 0.1);
  CHECK_THROWS_AS(adam_step(params, st), std::runtime_error);
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(23);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 3}, rng, true);
  Tensor v = random_tensor({3}, rng, true);
  auto forward = [&]() {
    Tensor m = matmul(a, b);
    Tensor g = gelu(add_rowwise(m, v));
    Tensor s = softmax(g, 1);
    return mean_all(mul(s, transpose(matmul(a, b)))).item();
  };
  {
    Tensor m = matmul(a, b);
    Tensor g = gelu(add_rowwise(m, v));
    Tensor s = softmax(g, 1);
    backward(mean_all(mul(s, transpose(matmul(a, b)))));
  }
  auto res = testing::fd_compare({a, b, v}, forward);
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("no NaN/Inf on finite inputs up to 1e3") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = random_tensor({3, 5}, rng, false, 300.0);
    assert_finite(softmax(x, 1), "softmax");
    assert_finite(gelu(x), "gelu");
    assert_finite(
        layer_norm(x, Tensor::full({5}, 1.0), Tensor::zeros({5})), "ln");
  }
}
