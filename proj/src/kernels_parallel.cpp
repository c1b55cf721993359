#include "awada/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace awada::kernels {

namespace {

// col[k * P + p] with k = (ci, ky, kx), p = (y, x); zero where padded.
void im2col(const ConvShape& s, const double* image, double* col) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const int P = oh * ow;
  const int K = s.patch_len();
#pragma omp parallel for schedule(static)
  for (int k = 0; k < K; ++k) {
    const int ci = k / (s.k_h * s.k_w);
    const int ky = (k / s.k_w) % s.k_h;
    const int kx = k % s.k_w;
    const double* plane = image + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
    double* row = col + static_cast<std::size_t>(k) * P;
    for (int y = 0; y < oh; ++y) {
      const int iy = y * s.stride - s.pad + ky;
      double* dst = row + y * ow;
      if (iy < 0 || iy >= s.in_h) {
        std::fill(dst, dst + ow, 0.0);
        continue;
      }
      for (int x = 0; x < ow; ++x) {
        const int ix = x * s.stride - s.pad + kx;
        dst[x] = (ix < 0 || ix >= s.in_w) ? 0.0 : plane[iy * s.in_w + ix];
      }
    }
  }
}

// Transposed layout colT[p * K + k].
void im2col_t(const ConvShape& s, const double* image, double* colt) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const int K = s.patch_len();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < oh * ow; ++p) {
    const int y = p / ow;
    const int x = p % ow;
    double* dst = colt + static_cast<std::size_t>(p) * K;
    for (int ci = 0; ci < s.in_ch; ++ci) {
      const double* plane = image + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
      for (int ky = 0; ky < s.k_h; ++ky) {
        const int iy = y * s.stride - s.pad + ky;
        for (int kx = 0; kx < s.k_w; ++kx) {
          const int ix = x * s.stride - s.pad + kx;
          const bool inside = iy >= 0 && iy < s.in_h && ix >= 0 && ix < s.in_w;
          *dst++ = inside ? plane[iy * s.in_w + ix] : 0.0;
        }
      }
    }
  }
}

}  // namespace

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int n) { omp_set_num_threads(std::max(1, n)); }

namespace parallel {

void conv2d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> kernel, std::span<const double> bias,
                    std::span<double> output) {
  const int P = s.out_h() * s.out_w();
  const int K = s.patch_len();
  std::vector<double> col(static_cast<std::size_t>(K) * P);
  for (int n = 0; n < s.batch; ++n) {
    im2col(s, input.data() + static_cast<std::size_t>(n) * s.in_ch * s.in_h * s.in_w,
           col.data());
    double* out_n = output.data() + static_cast<std::size_t>(n) * s.out_ch * P;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.out_ch; ++co) {
      double* out = out_n + static_cast<std::size_t>(co) * P;
      std::fill(out, out + P, bias[co]);
      const double* w = kernel.data() + static_cast<std::size_t>(co) * K;
      for (int k = 0; k < K; ++k) {
        const double wk = w[k];
        const double* src = col.data() + static_cast<std::size_t>(k) * P;
        for (int p = 0; p < P; ++p) out[p] += wk * src[p];
      }
    }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> grad_out,
                           std::span<const double> kernel, std::span<double> grad_in) {
  const int oh = s.out_h();
  const int ow = s.out_w();
  const int P = oh * ow;
  const int K = s.patch_len();
  std::vector<double> dcol(static_cast<std::size_t>(K) * P);
  for (int n = 0; n < s.batch; ++n) {
    const double* dy = grad_out.data() + static_cast<std::size_t>(n) * s.out_ch * P;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < K; ++k) {
      double* row = dcol.data() + static_cast<std::size_t>(k) * P;
      std::fill(row, row + P, 0.0);
      for (int co = 0; co < s.out_ch; ++co) {
        const double w = kernel[static_cast<std::size_t>(co) * K + k];
        const double* src = dy + static_cast<std::size_t>(co) * P;
        for (int p = 0; p < P; ++p) row[p] += w * src[p];
      }
    }
    double* dx = grad_in.data() + static_cast<std::size_t>(n) * s.in_ch * s.in_h * s.in_w;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < s.in_ch; ++ci) {
      double* plane = dx + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
      for (int ky = 0; ky < s.k_h; ++ky) {
        for (int kx = 0; kx < s.k_w; ++kx) {
          const int k = (ci * s.k_h + ky) * s.k_w + kx;
          const double* row = dcol.data() + static_cast<std::size_t>(k) * P;
          for (int y = 0; y < oh; ++y) {
            const int iy = y * s.stride - s.pad + ky;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int x = 0; x < ow; ++x) {
              const int ix = x * s.stride - s.pad + kx;
              if (ix < 0 || ix >= s.in_w) continue;
              plane[iy * s.in_w + ix] += row[y * ow + x];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvShape& s, std::span<const double> grad_out,
                            std::span<const double> input, std::span<double> grad_kernel,
                            std::span<double> grad_bias) {
  const int P = s.out_h() * s.out_w();
  const int K = s.patch_len();
  const std::size_t per_image = static_cast<std::size_t>(P) * K;
  std::vector<double> colt(per_image * s.batch);
  for (int n = 0; n < s.batch; ++n) {
    im2col_t(s, input.data() + static_cast<std::size_t>(n) * s.in_ch * s.in_h * s.in_w,
             colt.data() + n * per_image);
  }
#pragma omp parallel for schedule(static)
  for (int co = 0; co < s.out_ch; ++co) {
    double* gk = grad_kernel.data() + static_cast<std::size_t>(co) * K;
    double gb = grad_bias.empty() ? 0.0 : grad_bias[co];
    for (int n = 0; n < s.batch; ++n) {
      const double* dy = grad_out.data() + (static_cast<std::size_t>(n) * s.out_ch + co) * P;
      const double* cn = colt.data() + n * per_image;
      for (int p = 0; p < P; ++p) {
        const double d = dy[p];
        gb += d;
        const double* src = cn + static_cast<std::size_t>(p) * K;
        for (int k = 0; k < K; ++k) gk[k] += d * src[k];
      }
    }
    if (!grad_bias.empty()) grad_bias[co] = gb;
  }
}

}  // namespace parallel
}  // namespace awada::kernels
