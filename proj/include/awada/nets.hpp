#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "awada/geometry.hpp"
#include "awada/image_io.hpp"
#include "awada/rng.hpp"
#include "awada/tensor.hpp"

namespace awada {

/// Half-width of the uniform weight initialisation.
inline constexpr double kInitRange = 0.05;

/// Convolution with its own kernel and bias parameters.
struct Conv {
  Tensor kernel;
  Tensor bias;
  int stride = 1;
  int pad = 0;

  Conv() = default;
  Conv(const std::string& name, int in_ch, int out_ch, int k, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

struct GeneratorConfig {
  int in_ch = 3;
  int enc1 = 16;
  int enc2 = 32;
  int dec1 = 16;
  bool instance_norm = false;
  // Extra input plane holding each pixel's normalised image row.
  bool row_coordinate = false;
};

/// Encoder-decoder image translator: two stride-2 convolutions, two
/// nearest-neighbour upsampling stages, and a 1x1 pixel-local path added
/// before the tanh output. Output has the input's shape, values in [-1, 1].
class GeneratorNet {
 public:
  GeneratorNet(const std::string& name, const GeneratorConfig& config, std::uint64_t seed);

  /// `rows` is the [N,1,H,W] plane from row_coordinates(); required iff the
  /// net was built with row_coordinate.
  Tensor forward(const Tensor& image, const Tensor& rows = {}) const;
  bool uses_rows() const { return config_.row_coordinate; }
  std::vector<Tensor> parameters() const;

 private:
  GeneratorConfig config_;
  Conv enc1_, enc2_, dec1_, dec2_, skip_;
};

/// Patch discriminator: three stride-2 4x4 convolutions, sigmoid score map.
class DiscriminatorNet {
 public:
  DiscriminatorNet(const std::string& name, std::uint64_t seed, bool row_coordinate = false, int width1 = 16,
                   int width2 = 32);

  /// [N,3,H,W] -> [N,1,h,w] with h = output_size(H), w = output_size(W).
  Tensor forward(const Tensor& image, const Tensor& rows = {}) const;
  bool uses_rows() const { return row_coordinate_; }
  std::vector<Tensor> parameters() const;

  /// Score-map side length for an input side length; throws when the input
  /// is smaller than the receptive minimum (8 pixels).
  static int output_size(int input_size);

 private:
  bool row_coordinate_ = false;
  Conv c1_, c2_, c3_;
};

/// Per-pixel foreground/background classifier with channel softmax;
/// channel 1 is foreground.
class SegmenterNet {
 public:
  SegmenterNet(const std::string& name, std::uint64_t seed, int width = 16);

  Tensor forward(const Tensor& image) const;
  std::vector<Tensor> parameters() const;
  void freeze();

 private:
  Conv c1_, c2_, c3_;
};

/// One-stage objectness grid over 8x8 cells. Each cell predicts an
/// objectness logit and box offsets (dx, dy, log w, log h) relative to the
/// cell centre and size.
class ProposalDetector {
 public:
  static constexpr int kCell = 8;

  ProposalDetector(const std::string& name, std::uint64_t seed, int width = 32);

  /// [N,3,H,W] -> [N,5,H/8,W/8] raw outputs; H and W must be multiples of 8.
  Tensor forward(const Tensor& images) const;
  std::vector<Tensor> parameters() const;

  /// Training objective: objectness cross-entropy (positives up-weighted)
  /// plus L1 box regression on the cell holding each box centre.
  Tensor loss(const Tensor& images, const std::vector<std::vector<Box>>& boxes) const;

  /// Proposals for one [1,3,H,W] image, descending confidence, clipped to
  /// the image, greedy IoU-0.5 suppression, at most max_out. An untrained
  /// detector is allowed and returns noise.
  std::vector<Proposal> detect(const Tensor& image, int max_out) const;

 private:
  Conv c1_, c2_, c3_, c4_, c5_, head_;
};

/// 8-bit RGB image to [1,3,H,W] with values in [-1, 1].
Tensor image_to_tensor(const Image& image);
/// Stack crops of several images into [N,3,h,w].
Tensor images_to_tensor(const std::vector<const Image*>& images, const std::vector<Rect>& crops);
/// [N,1,h,w] plane with value 2 * (row + 0.5) / image_height - 1 at each
/// pixel, rows counted in the full image the crop was cut from.
Tensor row_coordinates(const std::vector<Rect>& crops, int image_height);
/// Sample n of a [N,3,H,W] tensor in [-1, 1] back to 8-bit RGB.
Image tensor_to_image(const Tensor& t, int n = 0);

}  // namespace awada
