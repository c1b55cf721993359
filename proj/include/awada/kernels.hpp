#pragma once

#include <span>

// 2-D convolution kernels over NCHW buffers with zero padding.
//
// Two implementations share one contract:
//   reference  plain direct summation, single-threaded; the ground truth for
//              tests and the baseline for bench/.
//   parallel   im2col + row-parallel GEMM under OpenMP.
// Every output element of the parallel kernels is produced by exactly one
// thread in a fixed order, so results do not depend on the thread count.
// Forward and kernel-gradient results also equal the reference exactly;
// input gradients are summed in a different order and agree to rounding.
//
// All backward kernels accumulate into their output buffers.

namespace awada::kernels {

struct ConvShape {
  int batch = 1;
  int in_ch = 1;
  int in_h = 1;
  int in_w = 1;
  int out_ch = 1;
  int k_h = 1;
  int k_w = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (in_h + 2 * pad - k_h) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - k_w) / stride + 1; }
  int patch_len() const { return in_ch * k_h * k_w; }
};

namespace reference {

void conv2d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> kernel, std::span<double> grad_in);
void conv2d_backward_kernel(const ConvShape& s, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias);

}  // namespace reference

namespace parallel {

void conv2d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> kernel, std::span<double> grad_in);
void conv2d_backward_kernel(const ConvShape& s, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias);

}  // namespace parallel

int thread_count();
void set_thread_count(int n);

}  // namespace awada::kernels
