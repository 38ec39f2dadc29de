#include <cmath>

#include "unigan/kernels.hpp"

namespace unigan::kernels::reference {
namespace {

std::int64_t in_index(const ConvGeometry& g, std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
  return ((n * g.in_channels + c) * g.in_h + y) * g.in_w + x;
}

std::int64_t out_index(const ConvGeometry& g, std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
  return ((n * g.out_channels + c) * g.out_h() + y) * g.out_w() + x;
}

std::int64_t w_index(const ConvGeometry& g, std::int64_t oc, std::int64_t ic, std::int64_t ky, std::int64_t kx) {
  return ((oc * g.in_channels + ic) * g.kernel + ky) * g.kernel + kx;
}

void conv_forward(const ConvGeometry& g, std::span<const Scalar> input, std::span<const Scalar> weight,
                  std::span<const Scalar> bias, std::span<Scalar> output) {
  g.validate();
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          Scalar acc = bias.empty() ? 0.0 : bias[oc];
          for (std::int64_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
              const auto iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
                const auto ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.in_w) continue;
                acc += weight[w_index(g, oc, ic, ky, kx)] * input[in_index(g, n, ic, iy, ix)];
              }
            }
          }
          output[out_index(g, n, oc, oy, ox)] = acc;
        }
      }
    }
  }
}

void conv_backward_input(const ConvGeometry& g, std::span<const Scalar> grad_output, std::span<const Scalar> weight,
                         std::span<Scalar> grad_input) {
  g.validate();
  for (auto& v : grad_input) v = 0.0;
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const Scalar go = grad_output[out_index(g, n, oc, oy, ox)];
          for (std::int64_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
              const auto iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
                const auto ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_input[in_index(g, n, ic, iy, ix)] += weight[w_index(g, oc, ic, ky, kx)] * go;
              }
            }
          }
        }
      }
    }
  }
}

void conv_backward_weight(const ConvGeometry& g, std::span<const Scalar> input, std::span<const Scalar> grad_output,
                          std::span<Scalar> grad_weight, std::span<Scalar> grad_bias) {
  g.validate();
  const auto oh = g.out_h(), ow = g.out_w();
  for (std::int64_t n = 0; n < g.batch; ++n) {
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const Scalar go = grad_output[out_index(g, n, oc, oy, ox)];
          if (!grad_bias.empty()) grad_bias[oc] += go;
          for (std::int64_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::int64_t ky = 0; ky < g.kernel; ++ky) {
              const auto iy = oy * g.stride + ky - g.pad;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel; ++kx) {
                const auto ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_weight[w_index(g, oc, ic, ky, kx)] += input[in_index(g, n, ic, iy, ix)] * go;
              }
            }
          }
        }
      }
    }
  }
}

void norm_forward(std::int64_t planes, std::int64_t plane_size, Scalar eps, std::span<const Scalar> input,
                  std::span<Scalar> output, std::span<Scalar> inv_std) {
  for (std::int64_t p = 0; p < planes; ++p) {
    const auto base = p * plane_size;
    Scalar mean = 0;
    for (std::int64_t i = 0; i < plane_size; ++i) mean += input[base + i];
    mean /= static_cast<Scalar>(plane_size);
    Scalar var = 0;
    for (std::int64_t i = 0; i < plane_size; ++i) {
      const Scalar d = input[base + i] - mean;
      var += d * d;
    }
    var /= static_cast<Scalar>(plane_size);
    const Scalar is = 1.0 / std::sqrt(var + eps);
    inv_std[p] = is;
    for (std::int64_t i = 0; i < plane_size; ++i) output[base + i] = (input[base + i] - mean) * is;
  }
}

void norm_backward(std::int64_t planes, std::int64_t plane_size, std::span<const Scalar> normalized,
                   std::span<const Scalar> inv_std, std::span<const Scalar> grad_output, std::span<Scalar> grad_input) {
  for (std::int64_t p = 0; p < planes; ++p) {
    const auto base = p * plane_size;
    Scalar mean_g = 0, mean_gx = 0;
    for (std::int64_t i = 0; i < plane_size; ++i) {
      mean_g += grad_output[base + i];
      mean_gx += grad_output[base + i] * normalized[base + i];
    }
    mean_g /= static_cast<Scalar>(plane_size);
    mean_gx /= static_cast<Scalar>(plane_size);
    for (std::int64_t i = 0; i < plane_size; ++i) {
      grad_input[base + i] += inv_std[p] * (grad_output[base + i] - mean_g - normalized[base + i] * mean_gx);
    }
  }
}

}  // namespace

const ConvKernels conv{conv_forward, conv_backward_input, conv_backward_weight};
const NormKernels norm{norm_forward, norm_backward};

}  // namespace unigan::kernels::reference
