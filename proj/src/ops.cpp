#include "awada/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "awada/kernels.hpp"

namespace awada {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

void require_rank4(const Tensor& a, const char* op) {
  if (a.ndim() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected rank-4 tensor, got " +
                                shape_str(a.shape()));
  }
}

// Pointwise unary op; `deriv(x, y)` is dy/dx given input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  const auto x = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
  return make_result(a.shape(), std::move(out), {a}, [deriv](detail::Node& self) {
    auto& in = *self.inputs[0];
    auto& g = detail::grad_buffer(in);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int pad) {
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (pad < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  require_rank4(input, "conv2d input");
  require_rank4(kernel, "conv2d kernel");
  if (bias.ndim() != 1 || bias.dim(0) != kernel.dim(0)) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                " does not match kernel " + shape_str(kernel.shape()));
  }
  if (input.dim(1) != kernel.dim(1)) {
    throw std::invalid_argument("conv2d: input " + shape_str(input.shape()) + " has " +
                                std::to_string(input.dim(1)) + " channels but kernel " +
                                shape_str(kernel.shape()) + " expects " +
                                std::to_string(kernel.dim(1)));
  }
  kernels::ConvShape s;
  s.batch = input.dim(0);
  s.in_ch = input.dim(1);
  s.in_h = input.dim(2);
  s.in_w = input.dim(3);
  s.out_ch = kernel.dim(0);
  s.k_h = kernel.dim(2);
  s.k_w = kernel.dim(3);
  s.stride = stride;
  s.pad = pad;
  if (s.k_h > s.in_h + 2 * pad || s.k_w > s.in_w + 2 * pad) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                " larger than padded input " + shape_str(input.shape()) +
                                " (pad " + std::to_string(pad) + ")");
  }
  const Shape out_shape{s.batch, s.out_ch, s.out_h(), s.out_w()};
  std::vector<double> out(shape_numel(out_shape));
  kernels::parallel::conv2d_forward(s, input.values(), kernel.values(), bias.values(), out);
  return make_result(out_shape, std::move(out), {input, kernel, bias}, [s](detail::Node& self) {
    auto& x = *self.inputs[0];
    auto& k = *self.inputs[1];
    auto& b = *self.inputs[2];
    if (x.requires_grad) {
      kernels::parallel::conv2d_backward_input(s, self.grad, k.value, detail::grad_buffer(x));
    }
    if (k.requires_grad || b.requires_grad) {
      std::vector<double> gk(k.value.size(), 0.0);
      std::vector<double> gb(b.value.size(), 0.0);
      kernels::parallel::conv2d_backward_kernel(s, self.grad, x.value, gk, gb);
      if (k.requires_grad) {
        auto& dst = detail::grad_buffer(k);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gk[i];
      }
      if (b.requires_grad) {
        auto& dst = detail::grad_buffer(b);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gb[i];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = detail::grad_buffer(*in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = detail::grad_buffer(*self.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = detail::grad_buffer(*self.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& x = *self.inputs[0];
    auto& y = *self.inputs[1];
    if (x.requires_grad) {
      auto& g = detail::grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      auto& g = detail::grad_buffer(y);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(std::max(x, kLogClamp)); },
               [](double x, double) { return x > kLogClamp ? 1.0 / x : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

namespace {

struct Reduction {
  Shape out_shape;
  std::vector<std::size_t> target;  // output index of every input element
  std::size_t count = 0;            // input elements per output element
};

Reduction plan_reduction(const Tensor& a, const std::vector<int>& axes) {
  if (a.numel() == 0) {
    throw std::invalid_argument("reduction over empty tensor " + shape_str(a.shape()));
  }
  const int rank = a.ndim();
  std::vector<bool> reduced(rank, axes.empty());
  for (int ax : axes) {
    if (ax < 0 || ax >= rank) {
      throw std::invalid_argument("reduction axis " + std::to_string(ax) +
                                  " invalid for shape " + shape_str(a.shape()));
    }
    reduced[ax] = true;
  }
  Reduction r;
  r.out_shape = a.shape();
  r.count = 1;
  for (int d = 0; d < rank; ++d) {
    if (reduced[d]) {
      r.count *= a.shape()[d];
      r.out_shape[d] = 1;
    }
  }
  r.target.resize(a.numel());
  std::vector<int> idx(rank, 0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    std::size_t o = 0;
    for (int d = 0; d < rank; ++d) o = o * r.out_shape[d] + (reduced[d] ? 0 : idx[d]);
    r.target[i] = o;
    for (int d = rank - 1; d >= 0; --d) {
      if (++idx[d] < a.shape()[d]) break;
      idx[d] = 0;
    }
  }
  return r;
}

Tensor reduce(const Tensor& a, const std::vector<int>& axes, bool average) {
  auto plan = plan_reduction(a, axes);
  std::vector<double> out(shape_numel(plan.out_shape), 0.0);
  const auto x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) out[plan.target[i]] += x[i];
  const double count = static_cast<double>(plan.count);
  if (average) {
    for (double& v : out) v /= count;
  }
  auto target = std::make_shared<std::vector<std::size_t>>(std::move(plan.target));
  return make_result(plan.out_shape, std::move(out), {a},
                     [target, count, average](detail::Node& self) {
                       auto& g = detail::grad_buffer(*self.inputs[0]);
                       const auto& t = *target;
                       if (average) {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[t[i]] / count;
                       } else {
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[t[i]];
                       }
                     });
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& axes) { return reduce(a, axes, false); }

Tensor mean(const Tensor& a, const std::vector<int>& axes) { return reduce(a, axes, true); }

Tensor weighted_mean(const Tensor& a, const Tensor& weights) {
  require_same_shape(a, weights, "weighted_mean");
  if (a.numel() == 0) throw std::invalid_argument("weighted_mean over empty tensor");
  if (weights.requires_grad()) {
    throw std::invalid_argument("weighted_mean: weights must be constant");
  }
  const auto x = a.values();
  const auto w = weights.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * w[i];
  const double count = static_cast<double>(a.numel());
  Shape out_shape(a.ndim(), 1);
  return make_result(out_shape, {acc / count}, {a, weights}, [count](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    const auto& wv = self.inputs[1]->value;
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (go * wv[i]) / count;
  });
}

Tensor upsample2x(const Tensor& a) {
  require_rank4(a, "upsample2x");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (h < 1 || w < 1) throw std::invalid_argument("upsample2x: empty spatial dims");
  const Shape out_shape{n, c, 2 * h, 2 * w};
  std::vector<double> out(shape_numel(out_shape));
  const auto x = a.values();
  for (int p = 0; p < n * c; ++p) {
    for (int y = 0; y < 2 * h; ++y) {
      for (int xx = 0; xx < 2 * w; ++xx) {
        out[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx] =
            x[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2];
      }
    }
  }
  return make_result(out_shape, std::move(out), {a}, [n, c, h, w](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    for (int p = 0; p < n * c; ++p) {
      for (int y = 0; y < 2 * h; ++y) {
        for (int xx = 0; xx < 2 * w; ++xx) {
          g[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2] +=
              self.grad[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx];
        }
      }
    }
  });
}

Tensor avgpool2x(const Tensor& a) {
  require_rank4(a, "avgpool2x");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (h % 2 || w % 2 || h == 0 || w == 0) {
    throw std::invalid_argument("avgpool2x: spatial dims must be even, got " +
                                shape_str(a.shape()));
  }
  const int oh = h / 2, ow = w / 2;
  const Shape out_shape{n, c, oh, ow};
  std::vector<double> out(shape_numel(out_shape));
  const auto x = a.values();
  for (int p = 0; p < n * c; ++p) {
    const double* src = x.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const double s = src[2 * y * w + 2 * xx] + src[2 * y * w + 2 * xx + 1] +
                         src[(2 * y + 1) * w + 2 * xx] + src[(2 * y + 1) * w + 2 * xx + 1];
        out[(static_cast<std::size_t>(p) * oh + y) * ow + xx] = s * 0.25;
      }
    }
  }
  return make_result(out_shape, std::move(out), {a}, [n, c, h, w](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    const int oh2 = h / 2, ow2 = w / 2;
    for (int p = 0; p < n * c; ++p) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
          g[(static_cast<std::size_t>(p) * h + y) * w + xx] +=
              0.25 * self.grad[(static_cast<std::size_t>(p) * oh2 + y / 2) * ow2 + xx / 2];
        }
      }
    }
  });
}

Tensor softmax_channels(const Tensor& a) {
  require_rank4(a, "softmax_channels");
  const int n = a.dim(0), c = a.dim(1);
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  std::vector<double> out(a.numel());
  const auto x = a.values();
  for (int b = 0; b < n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      double mx = x[base + p];
      for (int k = 1; k < c; ++k) mx = std::max(mx, x[base + k * hw + p]);
      double z = 0.0;
      for (int k = 0; k < c; ++k) {
        const double e = std::exp(x[base + k * hw + p] - mx);
        out[base + k * hw + p] = e;
        z += e;
      }
      for (int k = 0; k < c; ++k) out[base + k * hw + p] /= z;
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [n, c, hw](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    const auto& y = self.value;
    for (int b = 0; b < n; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * c * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        double dot = 0.0;
        for (int k = 0; k < c; ++k) dot += y[base + k * hw + p] * self.grad[base + k * hw + p];
        for (int k = 0; k < c; ++k) {
          const std::size_t i = base + k * hw + p;
          g[i] += y[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor slice_channels(const Tensor& a, int begin, int end) {
  require_rank4(a, "slice_channels");
  const int n = a.dim(0), c = a.dim(1);
  if (begin < 0 || end > c || begin >= end) {
    throw std::invalid_argument("slice_channels: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  const int oc = end - begin;
  const Shape out_shape{n, oc, a.dim(2), a.dim(3)};
  std::vector<double> out(shape_numel(out_shape));
  const auto x = a.values();
  for (int b = 0; b < n; ++b) {
    std::copy_n(x.data() + (static_cast<std::size_t>(b) * c + begin) * hw, oc * hw,
                out.data() + static_cast<std::size_t>(b) * oc * hw);
  }
  return make_result(out_shape, std::move(out), {a}, [n, c, hw, begin, oc](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    for (int b = 0; b < n; ++b) {
      const double* src = self.grad.data() + static_cast<std::size_t>(b) * oc * hw;
      double* dst = g.data() + (static_cast<std::size_t>(b) * c + begin) * hw;
      for (std::size_t i = 0; i < oc * hw; ++i) dst[i] += src[i];
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw std::invalid_argument("concat_channels: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                                " differ outside the channel axis");
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  const Shape out_shape{n, ca + cb, a.dim(2), a.dim(3)};
  std::vector<double> out(shape_numel(out_shape));
  for (int i = 0; i < n; ++i) {
    double* dst = out.data() + static_cast<std::size_t>(i) * (ca + cb) * hw;
    std::copy_n(a.values().data() + static_cast<std::size_t>(i) * ca * hw, ca * hw, dst);
    std::copy_n(b.values().data() + static_cast<std::size_t>(i) * cb * hw, cb * hw, dst + ca * hw);
  }
  return make_result(out_shape, std::move(out), {a, b}, [n, ca, cb, hw](detail::Node& self) {
    const int parts[2] = {ca, cb};
    for (int k = 0; k < 2; ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      auto& g = detail::grad_buffer(in);
      const std::size_t offset = k == 0 ? 0 : ca * hw;
      const std::size_t len = parts[k] * hw;
      for (int i = 0; i < n; ++i) {
        const double* src = self.grad.data() + static_cast<std::size_t>(i) * (ca + cb) * hw + offset;
        double* dst = g.data() + static_cast<std::size_t>(i) * len;
        for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
      }
    }
  });
}

Tensor instance_norm(const Tensor& a, double eps) {
  require_rank4(a, "instance_norm");
  const int planes = a.dim(0) * a.dim(1);
  const std::size_t hw = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  std::vector<double> out(a.numel());
  auto inv_std = std::make_shared<std::vector<double>>(planes);
  const auto x = a.values();
  for (int p = 0; p < planes; ++p) {
    const double* src = x.data() + p * hw;
    double mu = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mu += src[i];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(hw);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[p] = is;
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] = (src[i] - mu) * is;
  }
  return make_result(a.shape(), std::move(out), {a}, [planes, hw, inv_std](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    const double m = static_cast<double>(hw);
    for (int p = 0; p < planes; ++p) {
      const double* y = self.value.data() + p * hw;
      const double* dy = self.grad.data() + p * hw;
      double mean_dy = 0.0, mean_dy_y = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        mean_dy += dy[i];
        mean_dy_y += dy[i] * y[i];
      }
      mean_dy /= m;
      mean_dy_y /= m;
      for (std::size_t i = 0; i < hw; ++i) {
        g[p * hw + i] += (*inv_std)[p] * (dy[i] - mean_dy - y[i] * mean_dy_y);
      }
    }
  });
}

Tensor crop2d(const Tensor& a, int height, int width) {
  require_rank4(a, "crop2d");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (height < 1 || width < 1 || height > h || width > w) {
    throw std::invalid_argument("crop2d: cannot crop " + shape_str(a.shape()) + " to " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  const Shape out_shape{n, c, height, width};
  std::vector<double> out(shape_numel(out_shape));
  const auto x = a.values();
  for (int p = 0; p < n * c; ++p) {
    for (int y = 0; y < height; ++y) {
      std::copy_n(x.data() + (static_cast<std::size_t>(p) * h + y) * w, width,
                  out.data() + (static_cast<std::size_t>(p) * height + y) * width);
    }
  }
  return make_result(out_shape, std::move(out), {a}, [n, c, h, w, height, width](detail::Node& self) {
    auto& g = detail::grad_buffer(*self.inputs[0]);
    for (int p = 0; p < n * c; ++p) {
      for (int y = 0; y < height; ++y) {
        const double* src = self.grad.data() + (static_cast<std::size_t>(p) * height + y) * width;
        double* dst = g.data() + (static_cast<std::size_t>(p) * h + y) * w;
        for (int x = 0; x < width; ++x) dst[x] += src[x];
      }
    }
  });
}

Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), std::vector<double>(a.values().begin(), a.values().end()));
}

}  // namespace awada
