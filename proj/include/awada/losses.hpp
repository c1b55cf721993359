#pragma once

#include <string>

#include "awada/tensor.hpp"

namespace awada {

/// Weights of the four terms of the generator objective.
struct LossWeights {
  double a1 = 1.0;   // adversarial, source -> target
  double a2 = 1.0;   // adversarial, target -> source
  double a3 = 10.0;  // cycle consistency
  double a4 = 1.0;   // semantic consistency

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// Which loss groups are attention-weighted.
struct AwmPlacement {
  bool disc = true;
  bool gen = true;
  bool cyc = false;
  bool sem = false;

  static AwmPlacement none() { return {false, false, false, false}; }
  /// Four characters in disc/gen/cyc/sem order, 'x' for weighted, '-' otherwise.
  std::string label() const;
  static AwmPlacement from_label(const std::string& label);
  bool operator==(const AwmPlacement&) const = default;
};

enum class GanForm { log, least_squares };

std::string to_string(GanForm f);
GanForm gan_form_from_string(const std::string& s);

// In every function below an undefined `attn` tensor means "no attention":
// the loss map is averaged plainly. A defined one must match the loss map's
// shape and is applied as (1/numel) * sum(map * attn).

/// Spatial reduction of a per-pixel loss map, optionally attention-weighted.
/// `normalized` divides by sum(attn) instead of the element count (0 when
/// the attention is all zero).
Tensor reduce_loss_map(const Tensor& map, const Tensor& attn, bool normalized = false);

Tensor gan_loss_discriminator(const Tensor& d_real, const Tensor& d_fake, GanForm form,
                              const Tensor& attn_real = {}, const Tensor& attn_fake = {},
                              bool normalized = false);

Tensor gan_loss_generator(const Tensor& d_fake, GanForm form, const Tensor& attn = {},
                          bool normalized = false);

/// L1 reconstruction, averaged over channels per pixel before weighting.
/// Images are [N,C,H,W]; attention maps are [N,1,H,W].
Tensor cycle_loss(const Tensor& x_s, const Tensor& recon_s, const Tensor& x_t,
                  const Tensor& recon_t, const Tensor& attn_s = {}, const Tensor& attn_t = {},
                  bool normalized = false);

/// Per-pixel KL(seg_stylized || seg_orig) summed over classes. seg_orig is
/// used as a constant target. Both inputs are [N,K,H,W] distributions.
Tensor semantic_loss(const Tensor& seg_orig, const Tensor& seg_stylized, const Tensor& attn = {},
                     bool normalized = false);

struct LossComponents {
  Tensor gan_st;
  Tensor gan_ts;
  Tensor cycle;
  Tensor semantic;  // may be undefined when the segmenter is disabled
};

/// a1*gan_st + a2*gan_ts + a3*cycle + a4*semantic. Throws naming the first
/// non-finite component.
Tensor total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace awada
