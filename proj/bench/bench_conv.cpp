// Reference versus parallel convolution kernels on the layer shapes the
// networks use. Thread count is the benchmark argument.
#include <benchmark/benchmark.h>

#include <vector>

#include "awada/kernels.hpp"
#include "awada/rng.hpp"

namespace {

using awada::kernels::ConvShape;

struct Layer {
  const char* name;
  ConvShape shape;
};

// Generator, discriminator and segmenter layers at batch 2 on 32x32 patches.
const Layer kLayers[] = {
    {"gen_enc1", {2, 4, 32, 32, 16, 3, 3, 2, 1}},
    {"gen_enc2", {2, 16, 16, 16, 32, 3, 3, 2, 1}},
    {"disc_c1", {2, 4, 32, 32, 16, 4, 4, 2, 1}},
    {"seg_c2", {2, 16, 32, 32, 16, 3, 3, 1, 1}},
};

struct Buffers {
  std::vector<double> input, kernel, bias, output, grad_out, grad_in, grad_kernel, grad_bias;

  explicit Buffers(const ConvShape& s) {
    awada::Rng rng(17);
    auto fill = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = rng.uniform(-1, 1);
    };
    const std::size_t out = std::size_t(s.batch) * s.out_ch * s.out_h() * s.out_w();
    fill(input, std::size_t(s.batch) * s.in_ch * s.in_h * s.in_w);
    fill(kernel, std::size_t(s.out_ch) * s.patch_len());
    fill(bias, s.out_ch);
    fill(grad_out, out);
    output.assign(out, 0.0);
    grad_in.assign(input.size(), 0.0);
    grad_kernel.assign(kernel.size(), 0.0);
    grad_bias.assign(bias.size(), 0.0);
  }
};

template <bool Parallel>
void forward(benchmark::State& state, const Layer& layer) {
  awada::kernels::set_thread_count(static_cast<int>(state.range(0)));
  Buffers b(layer.shape);
  for (auto _ : state) {
    if constexpr (Parallel) {
      awada::kernels::parallel::conv2d_forward(layer.shape, b.input, b.kernel, b.bias, b.output);
    } else {
      awada::kernels::reference::conv2d_forward(layer.shape, b.input, b.kernel, b.bias, b.output);
    }
    benchmark::DoNotOptimize(b.output.data());
  }
}

template <bool Parallel>
void backward(benchmark::State& state, const Layer& layer) {
  awada::kernels::set_thread_count(static_cast<int>(state.range(0)));
  Buffers b(layer.shape);
  for (auto _ : state) {
    if constexpr (Parallel) {
      awada::kernels::parallel::conv2d_backward_input(layer.shape, b.grad_out, b.kernel, b.grad_in);
      awada::kernels::parallel::conv2d_backward_kernel(layer.shape, b.grad_out, b.input, b.grad_kernel, b.grad_bias);
    } else {
      awada::kernels::reference::conv2d_backward_input(layer.shape, b.grad_out, b.kernel, b.grad_in);
      awada::kernels::reference::conv2d_backward_kernel(layer.shape, b.grad_out, b.input, b.grad_kernel,
                                                        b.grad_bias);
    }
    benchmark::DoNotOptimize(b.grad_in.data());
    benchmark::DoNotOptimize(b.grad_kernel.data());
  }
}

int register_all() {
  for (const Layer& l : kLayers) {
    const std::string n = l.name;
    benchmark::RegisterBenchmark(("forward/reference/" + n).c_str(), forward<false>, l)->Arg(1);
    benchmark::RegisterBenchmark(("forward/parallel/" + n).c_str(), forward<true>, l)->Arg(1)->Arg(2)->Arg(4);
    benchmark::RegisterBenchmark(("backward/reference/" + n).c_str(), backward<false>, l)->Arg(1);
    benchmark::RegisterBenchmark(("backward/parallel/" + n).c_str(), backward<true>, l)->Arg(1)->Arg(2)->Arg(4);
  }
  return 0;
}

const int registered = register_all();

}  // namespace

BENCHMARK_MAIN();
