#pragma once

// Compute kernels behind the autograd ops.
//
// Two implementations share one interface: `reference` is a direct serial
// transcription of the definitions and is kept for testing; `parallel` is the
// production path (im2col + GEMM, OpenMP across samples/planes). The
// dispatching free functions route to whichever backend is active.

#include <cstdint>
#include <span>

#include "unigan/tensor.hpp"

namespace unigan::kernels {

struct ConvGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t in_h = 1;
  std::int64_t in_w = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad = 0;  // zero padding on every border

  std::int64_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::int64_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::int64_t input_numel() const { return batch * in_channels * in_h * in_w; }
  std::int64_t output_numel() const { return batch * out_channels * out_h() * out_w(); }
  std::int64_t weight_numel() const { return out_channels * in_channels * kernel * kernel; }
  // Throws ShapeError when the geometry produces an empty output.
  void validate() const;
};

// Weight layout is [out_channels, in_channels, kernel, kernel].
// Outputs are overwritten; `bias` may be empty.
struct ConvKernels {
  void (*forward)(const ConvGeometry&, std::span<const Scalar> input, std::span<const Scalar> weight,
                  std::span<const Scalar> bias, std::span<Scalar> output);
  // grad_input := W^T applied to grad_output (the adjoint of forward, without bias).
  void (*backward_input)(const ConvGeometry&, std::span<const Scalar> grad_output, std::span<const Scalar> weight,
                         std::span<Scalar> grad_input);
  // grad_weight += ..., grad_bias += ... (accumulating; grad_bias may be empty).
  void (*backward_weight)(const ConvGeometry&, std::span<const Scalar> input, std::span<const Scalar> grad_output,
                          std::span<Scalar> grad_weight, std::span<Scalar> grad_bias);
};

// Per-(sample, channel) plane normalisation without affine parameters.
struct NormKernels {
  // Writes normalised output and the per-plane inverse std (length planes).
  void (*forward)(std::int64_t planes, std::int64_t plane_size, Scalar eps, std::span<const Scalar> input,
                  std::span<Scalar> output, std::span<Scalar> inv_std);
  // grad_input += d/dx given the normalised output and inv_std from forward.
  void (*backward)(std::int64_t planes, std::int64_t plane_size, std::span<const Scalar> normalized,
                   std::span<const Scalar> inv_std, std::span<const Scalar> grad_output, std::span<Scalar> grad_input);
};

namespace reference {
extern const ConvKernels conv;
extern const NormKernels norm;
}  // namespace reference

namespace parallel {
extern const ConvKernels conv;
extern const NormKernels norm;
}  // namespace parallel

enum class Backend { reference, parallel };

void set_backend(Backend backend);
Backend backend();
const ConvKernels& conv();
const NormKernels& norm();

// RAII switch used by tests to run a block on a given backend.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : previous_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

int max_threads();

}  // namespace unigan::kernels
