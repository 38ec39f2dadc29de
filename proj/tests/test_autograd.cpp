#include <doctest.h>

#include <random>

#include "support/oracles.hpp"
#include "unigan/autograd.hpp"
#include "unigan/errors.hpp"
#include "unigan/kernels.hpp"

using namespace unigan;
using unigan::testing::gradient_error;
using unigan::testing::random_tensor;

namespace {

// Values in +-[0.1, 1], away from the kinks of relu/abs/leaky_relu.
Tensor away_from_zero(std::mt19937_64& rng, Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape), 0.1, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (coin(rng)) t[i] = -t[i];
  }
  return t;
}

// Weighted sum, so every output element reaches the scalar loss differently.
ag::Var probe(const ag::Var& out, const Tensor& weights) { return ag::sum(out * ag::Var::constant(weights)); }

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("elementwise ops match finite differences") {
    std::mt19937_64 rng(11);
    const Shape s{2, 3, 4, 5};
    const Tensor r = random_tensor(rng, s);
    auto a = ag::Var::leaf(away_from_zero(rng, s)), b = ag::Var::leaf(away_from_zero(rng, s));
    auto p = ag::Var::leaf(random_tensor(rng, s, 0.2, 2.0));
    CHECK(gradient_error({a, b}, [&] { return probe(a * b + a - 2.0 * b, r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::relu(a), r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::leaky_relu(a, 0.2), r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::tanh(a), r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::sigmoid(a), r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::abs(a), r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::square(a), r); }) < 1e-6);
    CHECK(gradient_error({p}, [&] { return probe(ag::log(p), r); }, 1e-5) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::clamp(a, -0.5, 0.5), r); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return ag::mean(ag::add_scalar(a, 3.0)); }) < 1e-6);
  }

  TEST_CASE("structural ops match finite differences") {
    std::mt19937_64 rng(12);
    auto a = ag::Var::leaf(random_tensor(rng, {2, 3, 5, 6})), b = ag::Var::leaf(random_tensor(rng, {2, 2, 5, 6}));
    const Tensor w5 = random_tensor(rng, {2, 5, 5, 6});
    CHECK(gradient_error({a, b}, [&] { return probe(ag::concat_channels({a, b}), w5); }) < 1e-6);
    const Tensor w2 = random_tensor(rng, {2, 2, 5, 6});
    CHECK(gradient_error({a}, [&] { return probe(ag::slice_channels(a, 1, 2), w2); }) < 1e-6);
    const Tensor wp = random_tensor(rng, {2, 3, 9, 10});
    CHECK(gradient_error({a}, [&] { return probe(ag::reflection_pad(a, 2), wp); }) < 1e-6);
    const Tensor wdw = random_tensor(rng, {2, 3, 5, 5}), wdh = random_tensor(rng, {2, 3, 4, 6});
    CHECK(gradient_error({a}, [&] { return probe(ag::diff_w(a), wdw); }) < 1e-6);
    CHECK(gradient_error({a}, [&] { return probe(ag::diff_h(a), wdh); }) < 1e-6);
    auto c = ag::Var::leaf(random_tensor(rng, {2, 3, 6, 6}));
    const Tensor wa = random_tensor(rng, {2, 3, 3, 3}), wg = random_tensor(rng, {2, 3, 1, 1});
    CHECK(gradient_error({c}, [&] { return probe(ag::avg_pool2d(c, 2), wa); }) < 1e-6);
    CHECK(gradient_error({c}, [&] { return probe(ag::global_avg_pool(c), wg); }) < 1e-6);
  }

  TEST_CASE("reflection pad mirrors without repeating the edge") {
    auto x = ag::Var::constant(Tensor({1, 1, 1, 3}, {1, 2, 3}));
    CHECK_THROWS_AS(ag::reflection_pad(x, 3), ShapeError);
    auto y = ag::Var::constant(Tensor({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    const Tensor p = ag::reflection_pad(y, 1).value();
    CHECK(p.shape() == Shape{1, 1, 5, 5});
    CHECK(p.at(0, 0, 0, 0) == 5);
    CHECK(p.at(0, 0, 1, 0) == 2);
    CHECK(p.at(0, 0, 4, 4) == 5);
  }

  TEST_CASE("convolutions and instance norm match finite differences on both backends") {
    for (auto be : {kernels::Backend::reference, kernels::Backend::parallel}) {
      kernels::ScopedBackend guard(be);
      std::mt19937_64 rng(13);
      auto x = ag::Var::leaf(random_tensor(rng, {2, 3, 6, 6}));
      auto w = ag::Var::leaf(random_tensor(rng, {4, 3, 3, 3}, -0.5, 0.5));
      auto b = ag::Var::leaf(random_tensor(rng, {4}));
      const Tensor r1 = random_tensor(rng, {2, 4, 3, 3});
      CHECK(gradient_error({x, w, b}, [&] { return probe(ag::conv2d(x, w, b, 2, 1), r1); }) < 1e-6);

      auto wt = ag::Var::leaf(random_tensor(rng, {3, 2, 3, 3}, -0.5, 0.5));
      auto bt = ag::Var::leaf(random_tensor(rng, {2}));
      const Tensor r2 = random_tensor(rng, {2, 2, 12, 12});
      CHECK(gradient_error({x, wt, bt}, [&] { return probe(ag::conv_transpose2d(x, wt, bt, 2, 1, 12, 12), r2); }) <
            1e-6);

      const Tensor r3 = random_tensor(rng, {2, 3, 6, 6});
      CHECK(gradient_error({x}, [&] { return probe(ag::instance_norm(x), r3); }) < 1e-5);
    }
  }

  TEST_CASE("transposed conv doubles the spatial size") {
    std::mt19937_64 rng(14);
    auto x = ag::Var::constant(random_tensor(rng, {1, 4, 5, 5}));
    auto w = ag::Var::constant(random_tensor(rng, {4, 2, 3, 3}));
    CHECK(ag::conv_transpose2d(x, w, {}, 2, 1, 10, 10).shape() == Shape{1, 2, 10, 10});
  }

  TEST_CASE("gradients accumulate over shared subexpressions") {
    auto a = ag::Var::leaf(Tensor({1}, 3.0));
    ag::backward(ag::sum(a * a + a));
    CHECK(a.grad()[0] == doctest::Approx(7.0));
  }

  TEST_CASE("NoGradGuard records no graph") {
    auto a = ag::Var::leaf(Tensor({1}, 2.0));
    ag::Var out;
    {
      ag::NoGradGuard guard;
      CHECK_FALSE(ag::grad_enabled());
      out = a * a;
    }
    CHECK(ag::grad_enabled());
    CHECK_FALSE(out.requires_grad());
    CHECK(out.value()[0] == 4.0);
  }

  TEST_CASE("shape mismatches raise ShapeError") {
    auto a = ag::Var::constant(Tensor({1, 1, 2, 2}));
    auto b = ag::Var::constant(Tensor({1, 1, 2, 3}));
    CHECK_THROWS_AS(a + b, ShapeError);
    CHECK_THROWS_AS(ag::conv2d(a, ag::Var::constant(Tensor({1, 2, 1, 1})), {}, 1, 0), ShapeError);
  }
}
