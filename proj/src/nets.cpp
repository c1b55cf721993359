#include "awada/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "awada/ops.hpp"

namespace awada {

namespace {

constexpr double kSlope = 0.2;
constexpr double kPositiveWeight = 10.0;

std::vector<double> uniform_init(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-kInitRange, kInitRange);
  return v;
}

void require_channels(const Tensor& image, int channels, const char* who) {
  if (image.ndim() != 4 || image.dim(1) != channels) {
    throw std::invalid_argument(std::string(who) + ": expected [N," + std::to_string(channels) +
                                ",H,W] input, got " + shape_str(image.shape()));
  }
}

Tensor maybe_norm(const Tensor& x, bool on) { return on ? instance_norm(x) : x; }

Tensor with_rows(const Tensor& image, const Tensor& rows, bool expected, const char* who) {
  if (!expected) {
    if (rows.defined()) throw std::invalid_argument(std::string(who) + ": built without a row-coordinate input");
    return image;
  }
  if (!rows.defined()) throw std::invalid_argument(std::string(who) + ": row-coordinate plane required");
  return concat_channels(image, rows);
}

}  // namespace

Conv::Conv(const std::string& name, int in_ch, int out_ch, int k, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  kernel = Tensor::parameter(name + ".w", {out_ch, in_ch, k, k},
                             uniform_init(std::size_t(out_ch) * in_ch * k * k, rng));
  bias = Tensor::parameter(name + ".b", {out_ch}, uniform_init(out_ch, rng));
}

Tensor Conv::operator()(const Tensor& x) const { return conv2d(x, kernel, bias, stride, pad); }

GeneratorNet::GeneratorNet(const std::string& name, const GeneratorConfig& config,
                           std::uint64_t seed)
    : config_(config) {
  Rng rng(seed);
  const int in = config.in_ch + (config.row_coordinate ? 1 : 0);
  enc1_ = Conv(name + "/enc1", in, config.enc1, 3, 2, 1, rng);
  enc2_ = Conv(name + "/enc2", config.enc1, config.enc2, 3, 2, 1, rng);
  dec1_ = Conv(name + "/dec1", config.enc2, config.dec1, 3, 1, 1, rng);
  dec2_ = Conv(name + "/dec2", config.dec1, config.in_ch, 3, 1, 1, rng);
  skip_ = Conv(name + "/skip", in, config.in_ch, 1, 1, 0, rng);
}

Tensor GeneratorNet::forward(const Tensor& pixels, const Tensor& rows) const {
  require_channels(pixels, config_.in_ch, "generator");
  const Tensor image = with_rows(pixels, rows, config_.row_coordinate, "generator");
  const int h0 = image.dim(2), w0 = image.dim(3);
  const Tensor e1 = leaky_relu(maybe_norm(enc1_(image), config_.instance_norm), kSlope);
  const Tensor e2 = leaky_relu(maybe_norm(enc2_(e1), config_.instance_norm), kSlope);
  Tensor u1 = upsample2x(e2);
  if (u1.dim(2) != e1.dim(2) || u1.dim(3) != e1.dim(3)) u1 = crop2d(u1, e1.dim(2), e1.dim(3));
  const Tensor d1 = leaky_relu(maybe_norm(dec1_(u1), config_.instance_norm), kSlope);
  Tensor u2 = upsample2x(d1);
  if (u2.dim(2) != h0 || u2.dim(3) != w0) u2 = crop2d(u2, h0, w0);
  return tanh(add(dec2_(u2), skip_(image)));
}

std::vector<Tensor> GeneratorNet::parameters() const {
  return {enc1_.kernel, enc1_.bias, enc2_.kernel, enc2_.bias, dec1_.kernel,
          dec1_.bias,   dec2_.kernel, dec2_.bias, skip_.kernel, skip_.bias};
}

DiscriminatorNet::DiscriminatorNet(const std::string& name, std::uint64_t seed, bool row_coordinate,
                                   int width1, int width2)
    : row_coordinate_(row_coordinate) {
  Rng rng(seed);
  c1_ = Conv(name + "/c1", row_coordinate ? 4 : 3, width1, 4, 2, 1, rng);
  c2_ = Conv(name + "/c2", width1, width2, 4, 2, 1, rng);
  c3_ = Conv(name + "/c3", width2, 1, 4, 2, 1, rng);
}

int DiscriminatorNet::output_size(int input_size) {
  if (input_size < 8) {
    throw std::invalid_argument("discriminator input side " + std::to_string(input_size) +
                                " is below the receptive minimum of 8 pixels");
  }
  int n = input_size;
  for (int layer = 0; layer < 3; ++layer) n = (n + 2 - 4) / 2 + 1;
  return n;
}

Tensor DiscriminatorNet::forward(const Tensor& image, const Tensor& rows) const {
  require_channels(image, 3, "discriminator");
  output_size(image.dim(2));
  output_size(image.dim(3));
  const Tensor h1 = leaky_relu(c1_(with_rows(image, rows, row_coordinate_, "discriminator")), kSlope);
  const Tensor h2 = leaky_relu(c2_(h1), kSlope);
  return sigmoid(c3_(h2));
}

std::vector<Tensor> DiscriminatorNet::parameters() const {
  return {c1_.kernel, c1_.bias, c2_.kernel, c2_.bias, c3_.kernel, c3_.bias};
}

SegmenterNet::SegmenterNet(const std::string& name, std::uint64_t seed, int width) {
  Rng rng(seed);
  c1_ = Conv(name + "/c1", 3, width, 3, 1, 1, rng);
  c2_ = Conv(name + "/c2", width, width, 3, 1, 1, rng);
  c3_ = Conv(name + "/c3", width, 2, 1, 1, 0, rng);
}

Tensor SegmenterNet::forward(const Tensor& image) const {
  require_channels(image, 3, "segmenter");
  const Tensor h1 = leaky_relu(c1_(image), kSlope);
  const Tensor h2 = leaky_relu(c2_(h1), kSlope);
  return softmax_channels(c3_(h2));
}

std::vector<Tensor> SegmenterNet::parameters() const {
  return {c1_.kernel, c1_.bias, c2_.kernel, c2_.bias, c3_.kernel, c3_.bias};
}

void SegmenterNet::freeze() {
  for (auto& p : parameters()) p.set_requires_grad(false);
}

ProposalDetector::ProposalDetector(const std::string& name, std::uint64_t seed, int width) {
  Rng rng(seed);
  const int half = width / 2;
  c1_ = Conv(name + "/c1", 3, half, 3, 1, 1, rng);
  c2_ = Conv(name + "/c2", half, half, 3, 2, 1, rng);
  c3_ = Conv(name + "/c3", half, width, 3, 2, 1, rng);
  c4_ = Conv(name + "/c4", width, width, 3, 2, 1, rng);
  c5_ = Conv(name + "/c5", width, width, 3, 1, 1, rng);
  head_ = Conv(name + "/head", width, 5, 1, 1, 0, rng);
}

Tensor ProposalDetector::forward(const Tensor& images) const {
  require_channels(images, 3, "detector");
  if (images.dim(2) % kCell || images.dim(3) % kCell) {
    throw std::invalid_argument("detector input " + shape_str(images.shape()) +
                                " must have sides divisible by 8");
  }
  Tensor h = leaky_relu(c1_(images), kSlope);
  h = leaky_relu(c2_(h), kSlope);
  h = leaky_relu(c3_(h), kSlope);
  h = leaky_relu(c4_(h), kSlope);
  h = leaky_relu(c5_(h), kSlope);
  return head_(h);
}

std::vector<Tensor> ProposalDetector::parameters() const {
  std::vector<Tensor> out;
  for (const Conv* c : {&c1_, &c2_, &c3_, &c4_, &c5_, &head_}) {
    out.push_back(c->kernel);
    out.push_back(c->bias);
  }
  return out;
}

Tensor ProposalDetector::loss(const Tensor& images,
                              const std::vector<std::vector<Box>>& boxes) const {
  const Tensor out = forward(images);
  const int n = out.dim(0), gh = out.dim(2), gw = out.dim(3);
  if (static_cast<int>(boxes.size()) != n) {
    throw std::invalid_argument("detector loss: " + std::to_string(boxes.size()) +
                                " label sets for a batch of " + std::to_string(n));
  }
  const std::size_t cells = std::size_t(gh) * gw;
  std::vector<double> obj_target(n * cells, 0.0);
  std::vector<double> obj_weight(n * cells, 1.0);
  std::vector<double> box_target(n * 4 * cells, 0.0);
  std::vector<double> box_mask(n * 4 * cells, 0.0);
  std::vector<double> best_area(n * cells, 0.0);
  int positives = 0;
  for (int b = 0; b < n; ++b) {
    for (const auto& box : boxes[b]) {
      const double cx = 0.5 * (box.x1 + box.x2), cy = 0.5 * (box.y1 + box.y2);
      const int j = std::clamp(static_cast<int>(cx / kCell), 0, gw - 1);
      const int i = std::clamp(static_cast<int>(cy / kCell), 0, gh - 1);
      const std::size_t cell = std::size_t(i) * gw + j;
      if (box.area() <= best_area[b * cells + cell]) continue;
      if (best_area[b * cells + cell] == 0.0) ++positives;
      best_area[b * cells + cell] = box.area();
      obj_target[b * cells + cell] = 1.0;
      obj_weight[b * cells + cell] = kPositiveWeight;
      const double t[4] = {(cx - (j + 0.5) * kCell) / kCell, (cy - (i + 0.5) * kCell) / kCell,
                           std::log(box.width() / kCell), std::log(box.height() / kCell)};
      for (int k = 0; k < 4; ++k) {
        box_target[(b * 4 + k) * cells + cell] = t[k];
        box_mask[(b * 4 + k) * cells + cell] = 1.0;
      }
    }
  }
  const Tensor logits = slice_channels(out, 0, 1);
  const Tensor p = sigmoid(logits);
  const Shape obj_shape{n, 1, gh, gw};
  const Tensor y = Tensor::from(obj_shape, obj_target);
  std::vector<double> not_y(obj_target.size());
  for (std::size_t k = 0; k < not_y.size(); ++k) not_y[k] = 1.0 - obj_target[k];
  const Tensor ny = Tensor::from(obj_shape, std::move(not_y));
  const Tensor bce = scale(add(mul(y, log(p)), mul(ny, log(add_scalar(scale(p, -1.0), 1.0)))), -1.0);
  const Tensor obj_loss = weighted_mean(bce, Tensor::from(obj_shape, std::move(obj_weight)));

  const Tensor reg = slice_channels(out, 1, 5);
  const double norm = static_cast<double>(box_mask.size()) / (4.0 * std::max(1, positives));
  for (double& m : box_mask) m *= norm;
  const Shape box_shape{n, 4, gh, gw};
  const Tensor box_loss =
      weighted_mean(abs(sub(reg, Tensor::from(box_shape, std::move(box_target)))),
                    Tensor::from(box_shape, std::move(box_mask)));
  return add(obj_loss, box_loss);
}

std::vector<Proposal> ProposalDetector::detect(const Tensor& image, int max_out) const {
  if (max_out < 1) throw std::invalid_argument("detect: max_out must be at least 1");
  if (image.ndim() != 4 || image.dim(0) != 1) {
    throw std::invalid_argument("detect expects a single [1,3,H,W] image");
  }
  const Tensor out = forward(image);
  const int gh = out.dim(2), gw = out.dim(3);
  const double height = image.dim(2), width = image.dim(3);
  const std::size_t cells = std::size_t(gh) * gw;
  const auto v = out.values();
  std::vector<Proposal> candidates;
  for (int i = 0; i < gh; ++i) {
    for (int j = 0; j < gw; ++j) {
      const std::size_t cell = std::size_t(i) * gw + j;
      const double logit = v[cell];
      const double conf = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit))
                                     : std::exp(logit) / (1.0 + std::exp(logit));
      const double cx = (j + 0.5 + v[cells + cell]) * kCell;
      const double cy = (i + 0.5 + v[2 * cells + cell]) * kCell;
      const double w = std::exp(std::clamp(v[3 * cells + cell], -3.0, 3.0)) * kCell;
      const double h = std::exp(std::clamp(v[4 * cells + cell], -3.0, 3.0)) * kCell;
      const Box box = clip_box({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, width, height);
      if (box.valid()) candidates.push_back({box, conf});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Proposal& a, const Proposal& b) { return a.confidence > b.confidence; });
  std::vector<Proposal> kept;
  for (const auto& c : candidates) {
    if (static_cast<int>(kept.size()) >= max_out) break;
    bool suppressed = false;
    for (const auto& k : kept) suppressed = suppressed || iou(c.box, k.box) > 0.5;
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

Tensor image_to_tensor(const Image& image) {
  return images_to_tensor({&image}, {Rect{0, 0, image.width, image.height}});
}

Tensor images_to_tensor(const std::vector<const Image*>& images, const std::vector<Rect>& crops) {
  if (images.empty() || images.size() != crops.size()) {
    throw std::invalid_argument("images_to_tensor: need one crop per image");
  }
  const int h = crops[0].h, w = crops[0].w;
  const int n = static_cast<int>(images.size());
  std::vector<double> v(std::size_t(n) * 3 * h * w);
  for (int b = 0; b < n; ++b) {
    const Image& img = *images[b];
    const Rect& r = crops[b];
    if (r.w != w || r.h != h || r.x < 0 || r.y < 0 || r.x + r.w > img.width ||
        r.y + r.h > img.height || img.channels != 3) {
      throw std::invalid_argument("images_to_tensor: crop outside image or size mismatch");
    }
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          v[((std::size_t(b) * 3 + c) * h + y) * w + x] = img.at(r.x + x, r.y + y, c) / 127.5 - 1.0;
        }
      }
    }
  }
  return Tensor::from({n, 3, h, w}, std::move(v));
}

Tensor row_coordinates(const std::vector<Rect>& crops, int image_height) {
  if (crops.empty() || image_height < 1) throw std::invalid_argument("row_coordinates: no crops");
  const int h = crops[0].h, w = crops[0].w;
  const int n = static_cast<int>(crops.size());
  std::vector<double> v(std::size_t(n) * h * w);
  for (int b = 0; b < n; ++b) {
    if (crops[b].h != h || crops[b].w != w || crops[b].y < 0 || crops[b].y + h > image_height) {
      throw std::invalid_argument("row_coordinates: crop outside image or size mismatch");
    }
    for (int y = 0; y < h; ++y) {
      const double r = 2.0 * (crops[b].y + y + 0.5) / image_height - 1.0;
      std::fill_n(v.begin() + (std::size_t(b) * h + y) * w, w, r);
    }
  }
  return Tensor::from({n, 1, h, w}, std::move(v));
}

Image tensor_to_image(const Tensor& t, int n) {
  if (t.ndim() != 4 || t.dim(1) != 3 || n < 0 || n >= t.dim(0)) {
    throw std::invalid_argument("tensor_to_image: expected [N,3,H,W], got " + shape_str(t.shape()));
  }
  const int h = t.dim(2), w = t.dim(3);
  Image img(w, h, 3);
  const auto v = t.values();
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = (v[((std::size_t(n) * 3 + c) * h + y) * w + x] + 1.0) * 0.5;
        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0));
      }
    }
  }
  return img;
}

}  // namespace awada
