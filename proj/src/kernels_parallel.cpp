#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "unigan/kernels.hpp"

#ifdef UNIGAN_HAVE_OPENMP
#include <omp.h>
#endif

namespace unigan::kernels::parallel {
namespace {

// Plain in-order sums. Eigen's vectorised reductions peel an address-dependent
// prologue, which makes results vary with buffer alignment.
template <class F>
Scalar ordered_sum(std::int64_t n, F&& term) {
  Scalar acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += term(i);
  return acc;
}

template <class F>
Scalar ordered_mean(std::int64_t n, F&& term) {
  return ordered_sum(n, term) / static_cast<Scalar>(n);
}

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Output columns [lo, hi) whose input column ox * stride + kx - pad is in range.
void valid_span(const ConvGeometry& g, std::int64_t kx, std::int64_t ow, std::int64_t& lo, std::int64_t& hi) {
  const auto off = kx - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = g.in_w - off <= 0 ? 0 : std::min<std::int64_t>(ow, (g.in_w - off + g.stride - 1) / g.stride);
  if (hi < lo) hi = lo;
}

// col has shape [in_channels * k * k, out_h * out_w].
void im2col(const ConvGeometry& g, const Scalar* image, Scalar* col) {
  const auto oh = g.out_h(), ow = g.out_w(), k = g.kernel, s = g.stride;
  for (std::int64_t ic = 0; ic < g.in_channels; ++ic) {
    const Scalar* plane = image + ic * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        Scalar* row = col + ((ic * k + ky) * k + kx) * oh * ow;
        std::int64_t lo, hi;
        valid_span(g, kx, ow, lo, hi);
        const auto off = kx - g.pad;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const auto iy = oy * s + ky - g.pad;
          Scalar* dst = row + oy * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const Scalar* src = plane + iy * g.in_w + off;
          std::fill(dst, dst + lo, 0.0);
          if (s == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * s];
          }
          std::fill(dst + hi, dst + ow, 0.0);
        }
      }
    }
  }
}

// Scatter-add of col back onto the (zeroed) image.
void col2im(const ConvGeometry& g, const Scalar* col, Scalar* image) {
  const auto oh = g.out_h(), ow = g.out_w(), k = g.kernel, s = g.stride;
  for (std::int64_t ic = 0; ic < g.in_channels; ++ic) {
    Scalar* plane = image + ic * g.in_h * g.in_w;
    for (std::int64_t ky = 0; ky < k; ++ky) {
      for (std::int64_t kx = 0; kx < k; ++kx) {
        const Scalar* row = col + ((ic * k + ky) * k + kx) * oh * ow;
        std::int64_t lo, hi;
        valid_span(g, kx, ow, lo, hi);
        const auto off = kx - g.pad;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const auto iy = oy * s + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          const Scalar* src = row + oy * ow;
          Scalar* dst = plane + iy * g.in_w + off;
          for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * s] += src[ox];
        }
      }
    }
  }
}

std::int64_t col_rows(const ConvGeometry& g) { return g.in_channels * g.kernel * g.kernel; }
std::int64_t col_cols(const ConvGeometry& g) { return g.out_h() * g.out_w(); }

void conv_forward(const ConvGeometry& g, std::span<const Scalar> input, std::span<const Scalar> weight,
                  std::span<const Scalar> bias, std::span<Scalar> output) {
  g.validate();
  const auto rows = col_rows(g), cols = col_cols(g);
  const auto in_stride = g.in_channels * g.in_h * g.in_w;
  const auto out_stride = g.out_channels * cols;
  ConstMatrixMap w(weight.data(), g.out_channels, rows);
#pragma omp parallel
  {
    std::vector<Scalar> col(static_cast<std::size_t>(rows * cols));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      im2col(g, input.data() + n * in_stride, col.data());
      MatrixMap out(output.data() + n * out_stride, g.out_channels, cols);
      out.noalias() = w * ConstMatrixMap(col.data(), rows, cols);
      if (!bias.empty()) {
        for (std::int64_t oc = 0; oc < g.out_channels; ++oc) out.row(oc).array() += bias[oc];
      }
    }
  }
}

void conv_backward_input(const ConvGeometry& g, std::span<const Scalar> grad_output, std::span<const Scalar> weight,
                         std::span<Scalar> grad_input) {
  g.validate();
  const auto rows = col_rows(g), cols = col_cols(g);
  const auto in_stride = g.in_channels * g.in_h * g.in_w;
  const auto out_stride = g.out_channels * cols;
  ConstMatrixMap w(weight.data(), g.out_channels, rows);
#pragma omp parallel
  {
    std::vector<Scalar> col(static_cast<std::size_t>(rows * cols));
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      MatrixMap dcol(col.data(), rows, cols);
      dcol.noalias() = w.transpose() * ConstMatrixMap(grad_output.data() + n * out_stride, g.out_channels, cols);
      Scalar* dst = grad_input.data() + n * in_stride;
      for (std::int64_t i = 0; i < in_stride; ++i) dst[i] = 0.0;
      col2im(g, col.data(), dst);
    }
  }
}

void conv_backward_weight(const ConvGeometry& g, std::span<const Scalar> input, std::span<const Scalar> grad_output,
                          std::span<Scalar> grad_weight, std::span<Scalar> grad_bias) {
  g.validate();
  const auto rows = col_rows(g), cols = col_cols(g);
  const auto in_stride = g.in_channels * g.in_h * g.in_w;
  const auto out_stride = g.out_channels * cols;
  const int threads = max_threads();
  std::vector<RowMatrix> local_w(static_cast<std::size_t>(threads));
  std::vector<std::vector<Scalar>> local_b(static_cast<std::size_t>(threads));
#pragma omp parallel num_threads(threads)
  {
#ifdef UNIGAN_HAVE_OPENMP
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
#else
    const std::size_t tid = 0;
#endif
    std::vector<Scalar> col(static_cast<std::size_t>(rows * cols));
    local_w[tid] = RowMatrix::Zero(g.out_channels, rows);
    local_b[tid].assign(static_cast<std::size_t>(g.out_channels), 0.0);
#pragma omp for schedule(static)
    for (std::int64_t n = 0; n < g.batch; ++n) {
      im2col(g, input.data() + n * in_stride, col.data());
      ConstMatrixMap dout(grad_output.data() + n * out_stride, g.out_channels, cols);
      local_w[tid].noalias() += dout * ConstMatrixMap(col.data(), rows, cols).transpose();
      for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
        local_b[tid][static_cast<std::size_t>(oc)] += ordered_sum(cols, [&](std::int64_t i) { return dout(oc, i); });
      }
    }
  }
  // Reduce in thread order so the result does not depend on scheduling.
  MatrixMap gw(grad_weight.data(), g.out_channels, rows);
  for (std::size_t t = 0; t < local_w.size(); ++t) {
    if (local_w[t].size() == 0) continue;
    gw += local_w[t];
    if (!grad_bias.empty()) {
      for (std::int64_t oc = 0; oc < g.out_channels; ++oc) grad_bias[oc] += local_b[t][static_cast<std::size_t>(oc)];
    }
  }
}

void norm_forward(std::int64_t planes, std::int64_t plane_size, Scalar eps, std::span<const Scalar> input,
                  std::span<Scalar> output, std::span<Scalar> inv_std) {
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    Eigen::Map<const Eigen::ArrayX<Scalar>> x(input.data() + p * plane_size, plane_size);
    Eigen::Map<Eigen::ArrayX<Scalar>> y(output.data() + p * plane_size, plane_size);
    const Scalar mean = ordered_mean(plane_size, [&](std::int64_t i) { return x[i]; });
    const Scalar var = ordered_mean(plane_size, [&](std::int64_t i) { return (x[i] - mean) * (x[i] - mean); });
    const Scalar is = 1.0 / std::sqrt(var + eps);
    inv_std[p] = is;
    y = (x - mean) * is;
  }
}

void norm_backward(std::int64_t planes, std::int64_t plane_size, std::span<const Scalar> normalized,
                   std::span<const Scalar> inv_std, std::span<const Scalar> grad_output, std::span<Scalar> grad_input) {
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < planes; ++p) {
    Eigen::Map<const Eigen::ArrayX<Scalar>> xh(normalized.data() + p * plane_size, plane_size);
    Eigen::Map<const Eigen::ArrayX<Scalar>> dy(grad_output.data() + p * plane_size, plane_size);
    Eigen::Map<Eigen::ArrayX<Scalar>> dx(grad_input.data() + p * plane_size, plane_size);
    const Scalar mean_g = ordered_mean(plane_size, [&](std::int64_t i) { return dy[i]; });
    const Scalar mean_gx = ordered_mean(plane_size, [&](std::int64_t i) { return dy[i] * xh[i]; });
    dx += inv_std[p] * (dy - mean_g - xh * mean_gx);
  }
}

}  // namespace

const ConvKernels conv{conv_forward, conv_backward_input, conv_backward_weight};
const NormKernels norm{norm_forward, norm_backward};

}  // namespace unigan::kernels::parallel
