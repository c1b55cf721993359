#include "awada/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "awada/ops.hpp"

namespace awada {

namespace {

void check_distribution(const Tensor& p, const char* what) {
  if (p.ndim() != 4) {
    throw std::invalid_argument(std::string("semantic_loss: ") + what + " must be [N,K,H,W], got " +
                                shape_str(p.shape()));
  }
  const int n = p.dim(0), k = p.dim(1), plane = p.dim(2) * p.dim(3);
  const auto v = p.values();
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < plane; ++i) {
      double s = 0;
      for (int c = 0; c < k; ++c) {
        const double x = v[(std::size_t(b) * k + c) * plane + i];
        if (!(x >= -1e-12 && x <= 1 + 1e-12)) {
          throw std::invalid_argument(std::string("semantic_loss: ") + what +
                                      " holds a probability outside [0, 1]");
        }
        s += x;
      }
      if (std::abs(s - 1.0) > 1e-6) {
        throw std::invalid_argument(std::string("semantic_loss: ") + what +
                                    " does not sum to 1 at a pixel");
      }
    }
  }
}

Tensor l1_channel_mean(const Tensor& x, const Tensor& recon) {
  if (x.shape() != recon.shape()) {
    throw std::invalid_argument("cycle_loss: reconstruction " + shape_str(recon.shape()) +
                                " vs original " + shape_str(x.shape()));
  }
  return mean(abs(sub(recon, x)), {1});
}

}  // namespace

void LossWeights::validate() const {
  for (double a : {a1, a2, a3, a4}) {
    if (!std::isfinite(a) || a < 0) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
}

std::string AwmPlacement::label() const {
  std::string s;
  for (bool b : {disc, gen, cyc, sem}) s += b ? 'x' : '-';
  return s;
}

AwmPlacement AwmPlacement::from_label(const std::string& label) {
  if (label.size() != 4 || label.find_first_not_of("x-") != std::string::npos) {
    throw std::invalid_argument("placement '" + label +
                                "' must be four characters of 'x' or '-' (disc, gen, cyc, sem)");
  }
  return {label[0] == 'x', label[1] == 'x', label[2] == 'x', label[3] == 'x'};
}

std::string to_string(GanForm f) { return f == GanForm::log ? "log" : "least_squares"; }

GanForm gan_form_from_string(const std::string& s) {
  if (s == "log") return GanForm::log;
  if (s == "least_squares" || s == "lsgan") return GanForm::least_squares;
  throw std::invalid_argument("unknown GAN form '" + s + "' (log, least_squares)");
}

Tensor reduce_loss_map(const Tensor& map, const Tensor& attn, bool normalized) {
  if (!attn.defined()) return mean(map);
  if (attn.shape() != map.shape()) {
    throw std::invalid_argument("attention " + shape_str(attn.shape()) + " does not match loss map " +
                                shape_str(map.shape()));
  }
  Tensor weighted = weighted_mean(map, attn);
  if (!normalized) return weighted;
  double mass = 0;
  for (double a : attn.values()) mass += a;
  if (mass == 0) return scale(weighted, 0.0);
  return scale(weighted, static_cast<double>(map.numel()) / mass);
}

Tensor gan_loss_discriminator(const Tensor& d_real, const Tensor& d_fake, GanForm form,
                              const Tensor& attn_real, const Tensor& attn_fake, bool normalized) {
  if (d_real.shape() != d_fake.shape()) {
    throw std::invalid_argument("gan_loss_discriminator: real map " + shape_str(d_real.shape()) +
                                " vs fake map " + shape_str(d_fake.shape()));
  }
  if (form == GanForm::least_squares) {
    return add(reduce_loss_map(square(add_scalar(d_real, -1.0)), attn_real, normalized),
               reduce_loss_map(square(d_fake), attn_fake, normalized));
  }
  const Tensor real_term = reduce_loss_map(log(d_real), attn_real, normalized);
  const Tensor fake_term = reduce_loss_map(log(add_scalar(scale(d_fake, -1.0), 1.0)), attn_fake, normalized);
  return scale(add(real_term, fake_term), -1.0);
}

Tensor gan_loss_generator(const Tensor& d_fake, GanForm form, const Tensor& attn, bool normalized) {
  if (form == GanForm::least_squares) {
    return reduce_loss_map(square(add_scalar(d_fake, -1.0)), attn, normalized);
  }
  return scale(reduce_loss_map(log(d_fake), attn, normalized), -1.0);
}

Tensor cycle_loss(const Tensor& x_s, const Tensor& recon_s, const Tensor& x_t, const Tensor& recon_t,
                  const Tensor& attn_s, const Tensor& attn_t, bool normalized) {
  return add(reduce_loss_map(l1_channel_mean(x_s, recon_s), attn_s, normalized),
             reduce_loss_map(l1_channel_mean(x_t, recon_t), attn_t, normalized));
}

Tensor semantic_loss(const Tensor& seg_orig, const Tensor& seg_stylized, const Tensor& attn,
                     bool normalized) {
  if (seg_orig.shape() != seg_stylized.shape()) {
    throw std::invalid_argument("semantic_loss: " + shape_str(seg_orig.shape()) + " vs " +
                                shape_str(seg_stylized.shape()));
  }
  check_distribution(seg_orig, "original prediction");
  check_distribution(seg_stylized, "stylized prediction");
  const Tensor target = detach(seg_orig);
  const Tensor kl = sum(mul(seg_stylized, sub(log(seg_stylized), log(target))), {1});
  return reduce_loss_map(kl, attn, normalized);
}

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  const std::pair<const Tensor*, const char*> parts[] = {
      {&c.gan_st, "gan_st"}, {&c.gan_ts, "gan_ts"}, {&c.cycle, "cycle"}, {&c.semantic, "semantic"}};
  for (const auto& [t, name] : parts) {
    if (t->defined() && !std::isfinite(t->item())) {
      throw std::runtime_error(std::string("non-finite loss component '") + name + "'");
    }
  }
  if (!c.gan_st.defined() || !c.gan_ts.defined() || !c.cycle.defined()) {
    throw std::invalid_argument("total_loss: adversarial and cycle components are required");
  }
  Tensor total = add(add(scale(c.gan_st, w.a1), scale(c.gan_ts, w.a2)), scale(c.cycle, w.a3));
  if (c.semantic.defined()) total = add(total, scale(c.semantic, w.a4));
  return total;
}

}  // namespace awada
