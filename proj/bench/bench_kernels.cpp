// Reference vs parallel kernels on generator-sized layers.
//
//   ./bench_kernels --benchmark_filter=conv
//
// Arg 0 selects the backend (0 reference, 1 parallel), arg 1 the spatial side.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "unigan/kernels.hpp"

using namespace unigan;
using namespace unigan::kernels;

namespace {

std::vector<Scalar> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(-1, 1);
  std::vector<Scalar> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

const ConvKernels& conv_for(std::int64_t which) { return which == 0 ? reference::conv : parallel::conv; }
const NormKernels& norm_for(std::int64_t which) { return which == 0 ? reference::norm : parallel::norm; }

// 3x3 stride-1 conv, 32 -> 32 channels, batch 4.
ConvGeometry geometry(std::int64_t side) {
  ConvGeometry g;
  g.batch = 4;
  g.in_channels = 32;
  g.out_channels = 32;
  g.in_h = g.in_w = side;
  g.kernel = 3;
  g.pad = 1;
  return g;
}

void BM_conv_forward(benchmark::State& state) {
  const ConvGeometry g = geometry(state.range(1));
  const auto& k = conv_for(state.range(0));
  const auto in = noise(static_cast<std::size_t>(g.input_numel()), 1);
  const auto w = noise(static_cast<std::size_t>(g.weight_numel()), 2);
  const auto b = noise(static_cast<std::size_t>(g.out_channels), 3);
  std::vector<Scalar> out(static_cast<std::size_t>(g.output_numel()));
  for (auto _ : state) {
    k.forward(g, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * g.output_numel() * g.in_channels * g.kernel * g.kernel);
}

void BM_conv_backward(benchmark::State& state) {
  const ConvGeometry g = geometry(state.range(1));
  const auto& k = conv_for(state.range(0));
  const auto in = noise(static_cast<std::size_t>(g.input_numel()), 1);
  const auto w = noise(static_cast<std::size_t>(g.weight_numel()), 2);
  const auto dout = noise(static_cast<std::size_t>(g.output_numel()), 4);
  std::vector<Scalar> din(static_cast<std::size_t>(g.input_numel()));
  std::vector<Scalar> dw(w.size()), db(static_cast<std::size_t>(g.out_channels));
  for (auto _ : state) {
    k.backward_input(g, dout, w, din);
    k.backward_weight(g, in, dout, dw, db);
    benchmark::DoNotOptimize(din.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

void BM_norm(benchmark::State& state) {
  const std::int64_t planes = 4 * 32, plane = state.range(1) * state.range(1);
  const auto& k = norm_for(state.range(0));
  const auto in = noise(static_cast<std::size_t>(planes * plane), 5);
  const auto dout = noise(in.size(), 6);
  std::vector<Scalar> out(in.size()), din(in.size()), inv(static_cast<std::size_t>(planes));
  for (auto _ : state) {
    k.forward(planes, plane, 1e-5, in, out, inv);
    k.backward(planes, plane, out, inv, dout, din);
    benchmark::DoNotOptimize(din.data());
  }
  state.SetBytesProcessed(state.iterations() * planes * plane * static_cast<std::int64_t>(sizeof(Scalar)) * 3);
}

void sizes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"parallel", "side"});
  for (std::int64_t which : {0, 1}) {
    for (std::int64_t side : {16, 32, 64}) b->Args({which, side});
  }
  b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_conv_forward)->Apply(sizes);
BENCHMARK(BM_conv_backward)->Apply(sizes);
BENCHMARK(BM_norm)->Apply(sizes);

BENCHMARK_MAIN();
