// Blocked vs direct-loop convolution kernels, and serial vs OpenMP restarts.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "glab/attack.hpp"
#include "glab/kernels.hpp"
#include "glab/sprites.hpp"

using namespace glab;
using namespace glab::kernels;

namespace {

// Layer geometries of the default 32x32 network.
ConvGeometry layer(int i) {
  switch (i) {
    case 0: return {1, 1, 32, 32, 4, 3, 3, 1, 1};
    case 1: return {1, 4, 32, 32, 8, 3, 3, 2, 1};
    default: return {1, 8, 16, 16, 8, 3, 3, 1, 1};
  }
}

struct Buffers {
  std::vector<double> x, w, y;
  explicit Buffers(const ConvGeometry& g) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    x.resize(g.batch * g.in_channels * g.in_height * g.in_width);
    w.resize(g.out_channels * g.in_channels * g.kernel_height * g.kernel_width);
    y.resize(g.batch * g.out_channels * g.out_height() * g.out_width());
    for (auto* v : {&x, &w, &y}) {
      for (auto& e : *v) e = u(rng);
    }
  }
};

template <auto Kernel>
void forward(benchmark::State& state) {
  const ConvGeometry g = layer(static_cast<int>(state.range(0)));
  Buffers b(g);
  std::vector<double> out(b.y.size());
  for (auto _ : state) {
    Kernel(g, b.x, b.w, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Kernel>
void input_grad(benchmark::State& state) {
  const ConvGeometry g = layer(static_cast<int>(state.range(0)));
  Buffers b(g);
  std::vector<double> gx(b.x.size());
  for (auto _ : state) {
    Kernel(g, b.y, b.w, gx);
    benchmark::DoNotOptimize(gx.data());
  }
}

template <auto Kernel>
void weight_grad(benchmark::State& state) {
  const ConvGeometry g = layer(static_cast<int>(state.range(0)));
  Buffers b(g);
  std::vector<double> gw(b.w.size());
  for (auto _ : state) {
    Kernel(g, b.x, b.y, gw);
    benchmark::DoNotOptimize(gw.data());
  }
}

void restarts(benchmark::State& state) {
  const Dataset d = generate_sprites({.count = 1}, 3);
  const ModelGraph m = build_micro_cnn({1, 32, 32}, 8, 7);
  const auto cap = client_step(m, d.images[0], d.label_sets[0], LossKind::cross_entropy);
  AttackConfig cfg;
  cfg.strategy = Strategy::ggi;
  cfg.max_iterations = 20;
  cfg.restarts = 4;
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) {
    const auto r = run_attack(m, nullptr, cap, cfg, {std::nullopt, parallel});
    benchmark::DoNotOptimize(r.final_objective);
  }
}

}  // namespace

BENCHMARK(forward<conv2d_forward>)->Name("conv_forward/blocked")->DenseRange(0, 2);
BENCHMARK(forward<reference::conv2d_forward>)->Name("conv_forward/reference")->DenseRange(0, 2);
BENCHMARK(input_grad<conv2d_input_grad>)->Name("conv_input_grad/blocked")->DenseRange(0, 2);
BENCHMARK(input_grad<reference::conv2d_input_grad>)->Name("conv_input_grad/reference")->DenseRange(0, 2);
BENCHMARK(weight_grad<conv2d_weight_grad>)->Name("conv_weight_grad/blocked")->DenseRange(0, 2);
BENCHMARK(weight_grad<reference::conv2d_weight_grad>)->Name("conv_weight_grad/reference")->DenseRange(0, 2);
BENCHMARK(restarts)->ArgName("openmp")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
