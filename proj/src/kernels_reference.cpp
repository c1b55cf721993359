#include "awada/kernels.hpp"

namespace awada::kernels::reference {

void conv2d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  for (int n = 0; n < s.batch; ++n) {
    for (int co = 0; co < s.out_ch; ++co) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double acc = bias[co];
          for (int ci = 0; ci < s.in_ch; ++ci) {
            for (int ky = 0; ky < s.k_h; ++ky) {
              const int iy = y * s.stride - s.pad + ky;
              if (iy < 0 || iy >= s.in_h) continue;
              for (int kx = 0; kx < s.k_w; ++kx) {
                const int ix = x * s.stride - s.pad + kx;
                if (ix < 0 || ix >= s.in_w) continue;
                acc += kernel[((co * s.in_ch + ci) * s.k_h + ky) * s.k_w + kx] *
                       input[((n * s.in_ch + ci) * s.in_h + iy) * s.in_w + ix];
              }
            }
          }
          output[((n * s.out_ch + co) * oh + y) * ow + x] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> kernel, std::span<double> grad_in) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  for (int n = 0; n < s.batch; ++n) {
    for (int ci = 0; ci < s.in_ch; ++ci) {
      for (int iy = 0; iy < s.in_h; ++iy) {
        for (int ix = 0; ix < s.in_w; ++ix) {
          double acc = grad_in[((n * s.in_ch + ci) * s.in_h + iy) * s.in_w + ix];
          for (int co = 0; co < s.out_ch; ++co) {
            for (int ky = 0; ky < s.k_h; ++ky) {
              const int ty = iy + s.pad - ky;
              if (ty < 0 || ty % s.stride != 0) continue;
              const int y = ty / s.stride;
              if (y >= oh) continue;
              for (int kx = 0; kx < s.k_w; ++kx) {
                const int tx = ix + s.pad - kx;
                if (tx < 0 || tx % s.stride != 0) continue;
                const int x = tx / s.stride;
                if (x >= ow) continue;
                acc += kernel[((co * s.in_ch + ci) * s.k_h + ky) * s.k_w + kx] *
                       grad_out[((n * s.out_ch + co) * oh + y) * ow + x];
              }
            }
          }
          grad_in[((n * s.in_ch + ci) * s.in_h + iy) * s.in_w + ix] = acc;
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvShape& s, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  for (int co = 0; co < s.out_ch; ++co) {
    for (int ci = 0; ci < s.in_ch; ++ci) {
      for (int ky = 0; ky < s.k_h; ++ky) {
        for (int kx = 0; kx < s.k_w; ++kx) {
          const int idx = ((co * s.in_ch + ci) * s.k_h + ky) * s.k_w + kx;
          double acc = grad_kernel[idx];
          for (int n = 0; n < s.batch; ++n) {
            for (int y = 0; y < oh; ++y) {
              const int iy = y * s.stride - s.pad + ky;
              if (iy < 0 || iy >= s.in_h) continue;
              for (int x = 0; x < ow; ++x) {
                const int ix = x * s.stride - s.pad + kx;
                if (ix < 0 || ix >= s.in_w) continue;
                acc += grad_out[((n * s.out_ch + co) * oh + y) * ow + x] *
                       input[((n * s.in_ch + ci) * s.in_h + iy) * s.in_w + ix];
              }
            }
          }
          grad_kernel[idx] = acc;
        }
      }
    }
    if (!grad_bias.empty()) {
      double acc = grad_bias[co];
      for (int n = 0; n < s.batch; ++n) {
        for (int p = 0; p < oh * ow; ++p) acc += grad_out[(n * s.out_ch + co) * oh * ow + p];
      }
      grad_bias[co] = acc;
    }
  }
}

}  // namespace awada::kernels::reference
