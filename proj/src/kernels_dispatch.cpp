#include <atomic>

#include "unigan/errors.hpp"
#include "unigan/kernels.hpp"

#ifdef UNIGAN_HAVE_OPENMP
#include <omp.h>
#endif

namespace unigan::kernels {
namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void ConvGeometry::validate() const {
  if (batch < 1 || in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || pad < 0) {
    throw ShapeError("invalid convolution geometry");
  }
  if (in_h + 2 * pad < kernel || in_w + 2 * pad < kernel) {
    throw ShapeError("convolution input " + std::to_string(in_h) + "x" + std::to_string(in_w) +
                     " is smaller than kernel " + std::to_string(kernel));
  }
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

const ConvKernels& conv() { return backend() == Backend::reference ? reference::conv : parallel::conv; }
const NormKernels& norm() { return backend() == Backend::reference ? reference::norm : parallel::norm; }

int max_threads() {
#ifdef UNIGAN_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace unigan::kernels
