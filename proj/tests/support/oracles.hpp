#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "unigan/autograd.hpp"
#include "unigan/losses.hpp"

namespace unigan::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, Scalar lo = -1.0, Scalar hi = 1.0) {
  std::uniform_real_distribution<Scalar> u(lo, hi);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Worst relative disagreement between backprop and central differences,
// measured per leaf as max|analytic - numeric| / max|numeric| (max-norm).
inline double gradient_error(const std::vector<ag::Var>& leaves, const std::function<ag::Var()>& loss,
                             Scalar step = 1e-3) {
  for (const auto& l : leaves) l.zero_grad();
  ag::backward(loss());
  double worst = 0.0;
  for (const auto& leaf : leaves) {
    Tensor& v = leaf.mutable_value();
    const Tensor analytic = leaf.has_grad() ? leaf.grad() : Tensor(v.shape());
    double max_diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Scalar keep = v[i];
      Scalar plus, minus;
      {
        ag::NoGradGuard guard;
        v[i] = keep + step;
        plus = loss().value()[0];
        v[i] = keep - step;
        minus = loss().value()[0];
      }
      v[i] = keep;
      const double numeric = (plus - minus) / (2.0 * step);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
    if (scale > 0) worst = std::max(worst, max_diff / scale);
  }
  return worst;
}

// Minimum over every monotone coupling of the maximum pointwise distance,
// by explicit enumeration of all lattice paths.
inline double brute_force_frechet(std::span<const Scalar> a, std::span<const Scalar> b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double so_far) {
    so_far = std::max(so_far, std::abs(a[i] - b[j]));
    if (so_far >= best) return;
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = so_far;
      return;
    }
    if (i + 1 < a.size()) walk(i + 1, j, so_far);
    if (j + 1 < b.size()) walk(i, j + 1, so_far);
    if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, so_far);
  };
  walk(0, 0, 0.0);
  return best;
}

// Smooth stand-ins for the networks, so finite differences see no kinks.
// The generator output stays inside (-0.3, 0.3).
struct StubModels {
  ag::Var g_weight, g_bias;
  ag::Var ds_weight, ds_bias;  // structure-guided discriminator, 9 input channels
  ag::Var dp_weight, dp_bias;  // plain discriminator, 6 input channels

  explicit StubModels(std::mt19937_64& rng) {
    g_weight = ag::Var::leaf(random_tensor(rng, {3, 6, 3, 3}, -0.3, 0.3));
    g_bias = ag::Var::leaf(random_tensor(rng, {3}, -0.1, 0.1));
    ds_weight = ag::Var::leaf(random_tensor(rng, {1, 9, 4, 4}, -0.2, 0.2));
    ds_bias = ag::Var::leaf(random_tensor(rng, {1}, -0.1, 0.1));
    dp_weight = ag::Var::leaf(random_tensor(rng, {1, 6, 4, 4}, -0.2, 0.2));
    dp_bias = ag::Var::leaf(random_tensor(rng, {1}, -0.1, 0.1));
  }

  GeneratorFn generator() const {
    return [w = g_weight, b = g_bias](const ag::Var& img, const ag::Var& s) {
      return 0.3 * ag::tanh(ag::conv2d(ag::concat_channels({img, s}), w, b, 1, 1));
    };
  }
  DiscriminatorFn struct_disc() const {
    return [w = ds_weight, b = ds_bias](const ag::Var& in) { return ag::sigmoid(ag::conv2d(in, w, b, 2, 1)); };
  }
  DiscriminatorFn plain_disc() const {
    return [w = dp_weight, b = dp_bias](const ag::Var& in) { return ag::sigmoid(ag::conv2d(in, w, b, 2, 1)); };
  }
};

// Pair (a, b) in [-1, 1] whose elementwise gaps all exceed `margin`, so an L1
// kink is never crossed by a finite-difference step.
inline std::pair<Tensor, Tensor> separated_pair(std::mt19937_64& rng, const Shape& shape, Scalar margin = 0.01) {
  Tensor a = random_tensor(rng, shape), b = random_tensor(rng, shape);
  std::uniform_real_distribution<Scalar> u(-1.0, 1.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (std::abs(a[i] - b[i]) < margin) b[i] = u(rng);
  }
  return {a, b};
}

// Image whose horizontal and vertical neighbour differences all have
// magnitude >= 0.01: random ramps plus bounded noise.
inline Tensor ramp_image(std::mt19937_64& rng, const Shape& shape) {
  std::uniform_real_distribution<Scalar> noise(-0.02, 0.02);
  std::bernoulli_distribution coin(0.5);
  Tensor t(shape);
  for (std::int64_t n = 0; n < t.n(); ++n) {
    for (std::int64_t c = 0; c < t.c(); ++c) {
      const Scalar sx = coin(rng) ? 0.05 : -0.05, sy = coin(rng) ? 0.1 : -0.1;
      for (std::int64_t y = 0; y < t.h(); ++y) {
        for (std::int64_t x = 0; x < t.w(); ++x) t.at(n, c, y, x) = sx * x + sy * y - 0.5 * (sx + sy) * 7 + noise(rng);
      }
    }
  }
  return t;
}

}  // namespace unigan::testing
