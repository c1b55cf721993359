#include "awada/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "awada/nets.hpp"
#include "awada/ops.hpp"
#include "awada/parallel.hpp"
#include "awada/rng.hpp"
#include "awada/synthdata.hpp"
#include "awada/text.hpp"

namespace fs = std::filesystem;

namespace awada {

namespace {

constexpr std::uint64_t kRandomMaskStream = 0xA77E;

std::uint64_t id_hash(const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Pixel columns u with x1 <= u < x2, clipped to [0, limit).
std::pair<int, int> pixel_span(double lo, double hi, int limit) {
  const int a = std::max(0, static_cast<int>(std::ceil(lo)));
  const int b = std::min(limit, static_cast<int>(std::ceil(hi)));
  return {a, std::max(a, b)};
}


void write_map(const fs::path& path, const AttentionMap& map, bool fractional) {
  const fs::path tmp = path.string() + ".tmp";
  if (fractional) {
    std::vector<std::uint8_t> bytes(map.values.size() * sizeof(float));
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      const float f = static_cast<float>(map.values[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      for (int k = 0; k < 4; ++k) bytes[i * 4 + k] = static_cast<std::uint8_t>(bits >> (8 * k));
    }
    write_file_bytes(tmp, bytes);
  } else {
    Image img(map.width, map.height, 1);
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.values[i], 0.0, 1.0) * 255.0));
    }
    write_png(tmp, img);
  }
  fs::rename(tmp, path);
}

AttentionMap read_map(const fs::path& path, bool fractional, int width, int height) {
  AttentionMap map(width, height);
  if (fractional) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() != map.values.size() * 4) {
      throw std::runtime_error("attention file " + path.string() + " has wrong size");
    }
    for (std::size_t i = 0; i < map.values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= std::uint32_t(bytes[i * 4 + k]) << (8 * k);
      float f;
      std::memcpy(&f, &bits, sizeof(f));
      map.values[i] = f;
    }
  } else {
    const Image img = read_png(path, 1);
    if (img.width != width || img.height != height) {
      throw std::runtime_error("attention file " + path.string() + " has wrong dimensions");
    }
    for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] = img.pixels[i] / 255.0;
  }
  return map;
}

struct IndexEntry {
  std::string id, descriptor, threshold, checksum;
};

struct Index {
  std::string descriptor;
  int width = 0, height = 0;
  std::vector<IndexEntry> entries;
};

bool read_index(const fs::path& path, Index& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string magic, key;
  int version = 0, count = 0;
  in >> magic >> version;
  if (magic != "awada-attention-index" || version != 1) return false;
  in >> key >> out.descriptor >> key >> out.width >> out.height >> key >> count;
  if (!in || count < 0) return false;
  out.entries.resize(count);
  for (auto& e : out.entries) {
    in >> e.id >> e.descriptor >> e.threshold >> e.checksum;
    if (!in) return false;
  }
  return true;
}

}  // namespace

AttentionMap::AttentionMap(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("attention map dimensions must be positive");
  values.assign(std::size_t(w) * h, fill);
}

double AttentionMap::foreground_fraction() const {
  double s = 0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / values.size();
}

std::string to_string(Accumulation f) {
  switch (f) {
    case Accumulation::hard: return "hard";
    case Accumulation::mean: return "mean";
    case Accumulation::median: return "median";
    case Accumulation::max: return "max";
  }
  return "?";
}

Accumulation accumulation_from_string(const std::string& s) {
  if (s == "hard") return Accumulation::hard;
  if (s == "mean") return Accumulation::mean;
  if (s == "median") return Accumulation::median;
  if (s == "max") return Accumulation::max;
  throw std::invalid_argument("unknown accumulation '" + s + "' (hard, mean, median, max)");
}

void AttentionSource::validate() const {
  if (threshold < 0 || threshold > 1) throw std::invalid_argument("threshold c must lie in [0, 1]");
  if (factor <= 0) throw std::invalid_argument("inflation factor must be positive");
  if (fraction < 0 || fraction > 1) throw std::invalid_argument("random fraction must lie in [0, 1]");
}

std::string AttentionSource::descriptor() const {
  switch (kind) {
    case Kind::detector_proposals:
      return "proposals(c=" + format_double(threshold) + ",f=" + to_string(accumulation) + ")";
    case Kind::gt_boxes: return "gt_boxes";
    case Kind::gt_boxes_inflated: return "gt_inflate(factor=" + format_double(factor) + ")";
    case Kind::gt_masks: return "gt_masks";
    case Kind::random:
      return "random(p=" + format_double(fraction) + ",seed=" + std::to_string(seed) + ")";
    case Kind::all_ones: return "ones";
  }
  return "?";
}

AttentionSource::Kind AttentionSource::kind_from_string(const std::string& s) {
  if (s == "proposals") return Kind::detector_proposals;
  if (s == "gt_boxes") return Kind::gt_boxes;
  if (s == "gt_inflate") return Kind::gt_boxes_inflated;
  if (s == "gt_masks") return Kind::gt_masks;
  if (s == "random") return Kind::random;
  if (s == "ones") return Kind::all_ones;
  throw std::invalid_argument("unknown attention source '" + s +
                              "' (proposals, gt_boxes, gt_inflate, gt_masks, random, ones)");
}

bool AttentionSource::fractional() const {
  return kind == Kind::detector_proposals && accumulation != Accumulation::hard;
}

AttentionMap build_attention_map(std::span<const Proposal> proposals, double threshold, int width,
                                 int height, Accumulation fn) {
  AttentionMap map(width, height);
  if (fn == Accumulation::hard) {
    for (const auto& p : proposals) {
      if (p.confidence < threshold) continue;
      const auto [u0, u1] = pixel_span(p.box.x1, p.box.x2, width);
      const auto [v0, v1] = pixel_span(p.box.y1, p.box.y2, height);
      for (int v = v0; v < v1; ++v) {
        for (int u = u0; u < u1; ++u) map.at(u, v) = 1.0;
      }
    }
    return map;
  }
  std::vector<std::vector<double>> sets(map.values.size());
  for (const auto& p : proposals) {
    if (p.confidence < threshold) continue;
    const auto [u0, u1] = pixel_span(p.box.x1, p.box.x2, width);
    const auto [v0, v1] = pixel_span(p.box.y1, p.box.y2, height);
    for (int v = v0; v < v1; ++v) {
      for (int u = u0; u < u1; ++u) sets[std::size_t(v) * width + u].push_back(p.confidence);
    }
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto& s = sets[i];
    if (s.empty()) continue;
    double value = 0;
    if (fn == Accumulation::mean) {
      for (double c : s) value += c;
      value /= static_cast<double>(s.size());
    } else if (fn == Accumulation::max) {
      value = *std::max_element(s.begin(), s.end());
    } else {
      std::sort(s.begin(), s.end());
      const std::size_t m = s.size() / 2;
      value = s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
    }
    map.values[i] = std::clamp(value, 0.0, 1.0);
  }
  return map;
}

std::vector<Box> inflate_boxes(std::span<const Box> boxes, double factor, int width, int height,
                               int* dropped) {
  if (factor <= 0) throw std::invalid_argument("inflate_boxes: factor must be positive");
  std::vector<Box> out;
  int lost = 0;
  for (const auto& b : boxes) {
    const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
    const double hw = 0.5 * b.width() * factor, hh = 0.5 * b.height() * factor;
    const Box c = clip_box({cx - hw, cy - hh, cx + hw, cy + hh}, width, height);
    if (c.valid()) {
      out.push_back(c);
    } else {
      ++lost;
    }
  }
  if (dropped) *dropped = lost;
  return out;
}

AttentionMap random_mask(double p, int width, int height, std::uint64_t seed) {
  if (p < 0 || p > 1) throw std::invalid_argument("random_mask: p must lie in [0, 1]");
  AttentionMap map(width, height);
  Rng rng(seed);
  for (double& v : map.values) v = rng.bernoulli(p) ? 1.0 : 0.0;
  return map;
}

AttentionMap mask_from_gt(std::span<const Box> boxes, int width, int height) {
  AttentionMap map(width, height);
  for (const auto& b : boxes) {
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height || !b.valid()) {
      throw std::invalid_argument("ground-truth box outside the " + std::to_string(width) + "x" +
                                  std::to_string(height) + " image");
    }
    const auto [u0, u1] = pixel_span(b.x1, b.x2, width);
    const auto [v0, v1] = pixel_span(b.y1, b.y2, height);
    for (int v = v0; v < v1; ++v) {
      for (int u = u0; u < u1; ++u) map.at(u, v) = 1.0;
    }
  }
  return map;
}

AttentionMap mask_from_gt(const Image& mask) {
  if (mask.channels != 1) throw std::invalid_argument("mask_from_gt: mask must have one channel");
  AttentionMap map(mask.width, mask.height);
  for (std::size_t i = 0; i < map.values.size(); ++i) map.values[i] = mask.pixels[i] ? 1.0 : 0.0;
  return map;
}

AttentionMap crop_resize(const AttentionMap& map, const Rect& crop, int out_w, int out_h) {
  if (crop.w <= 0 || crop.h <= 0 || crop.x < 0 || crop.y < 0 || crop.x + crop.w > map.width ||
      crop.y + crop.h > map.height) {
    throw std::invalid_argument("crop (" + std::to_string(crop.x) + "," + std::to_string(crop.y) +
                                "," + std::to_string(crop.w) + "x" + std::to_string(crop.h) +
                                ") outside " + std::to_string(map.width) + "x" +
                                std::to_string(map.height) + " attention map");
  }
  AttentionMap out(out_w, out_h);
  for (int j = 0; j < out_h; ++j) {
    const int sy = crop.y + std::min(crop.h - 1, static_cast<int>((j + 0.5) * crop.h / out_h));
    for (int i = 0; i < out_w; ++i) {
      const int sx = crop.x + std::min(crop.w - 1, static_cast<int>((i + 0.5) * crop.w / out_w));
      out.at(i, j) = map.at(sx, sy);
    }
  }
  return out;
}

Tensor awm_weight(const Tensor& loss_map, const AttentionMap& attn) {
  const bool plain = loss_map.ndim() == 2;
  const bool batched = loss_map.ndim() == 4 && loss_map.dim(0) == 1 && loss_map.dim(1) == 1;
  if (!plain && !batched) {
    throw std::invalid_argument("awm_weight: loss map must be [H,W] or [1,1,H,W], got " +
                                shape_str(loss_map.shape()));
  }
  const int h = loss_map.dim(loss_map.ndim() - 2);
  const int w = loss_map.dim(loss_map.ndim() - 1);
  if (h != attn.height || w != attn.width) {
    throw std::invalid_argument("awm_weight: loss map " + shape_str(loss_map.shape()) +
                                " vs attention " + std::to_string(attn.height) + "x" +
                                std::to_string(attn.width));
  }
  return weighted_mean(loss_map, Tensor::from(loss_map.shape(), attn.values));
}

Tensor attention_tensor(std::span<const AttentionMap> maps) {
  if (maps.empty()) throw std::invalid_argument("attention_tensor: no maps");
  const int w = maps[0].width, h = maps[0].height;
  std::vector<double> v;
  v.reserve(maps.size() * std::size_t(w) * h);
  for (const auto& m : maps) {
    if (m.width != w || m.height != h) {
      throw std::invalid_argument("attention_tensor: maps differ in size");
    }
    v.insert(v.end(), m.values.begin(), m.values.end());
  }
  return Tensor::from({static_cast<int>(maps.size()), 1, h, w}, std::move(v));
}

AttentionMap to_storage_precision(const AttentionMap& map, bool fractional) {
  AttentionMap out = map;
  for (double& v : out.values) {
    v = fractional ? static_cast<double>(static_cast<float>(v))
                   : std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  }
  return out;
}

AttentionMap attention_for_sample(const DomainDataset& dataset, std::size_t index,
                                  const AttentionSource& source, const ProposalDetector* detector,
                                  int max_proposals) {
  const Sample& s = dataset.samples.at(index);
  const int w = s.image.width, h = s.image.height;
  using Kind = AttentionSource::Kind;
  const bool needs_labels = source.kind == Kind::gt_boxes || source.kind == Kind::gt_boxes_inflated ||
                            source.kind == Kind::gt_masks;
  if (needs_labels && !dataset.labeled()) {
    throw std::invalid_argument("attention source " + source.descriptor() +
                                " needs labels, but the " + to_string(dataset.domain) +
                                " dataset has none");
  }
  switch (source.kind) {
    case Kind::detector_proposals: {
      if (!detector) throw std::invalid_argument("attention source proposals requires a detector");
      const auto props = detector->detect(image_to_tensor(s.image), max_proposals);
      return build_attention_map(props, source.threshold, w, h, source.accumulation);
    }
    case Kind::gt_boxes: return mask_from_gt(s.boxes, w, h);
    case Kind::gt_boxes_inflated: return mask_from_gt(inflate_boxes(s.boxes, source.factor, w, h), w, h);
    case Kind::gt_masks: return mask_from_gt(s.mask);
    case Kind::random:
      return random_mask(source.fraction, w, h, derive_seed(source.seed, kRandomMaskStream, id_hash(s.id)));
    case Kind::all_ones: return AttentionMap(w, h, 1.0);
  }
  throw std::logic_error("unhandled attention source");
}

AttentionCache precompute_attention_cache(const DomainDataset& dataset, const AttentionSource& source,
                                          const ProposalDetector* detector, const fs::path& dir,
                                          CacheMode mode, int max_proposals) {
  source.validate();
  if (source.kind == AttentionSource::Kind::detector_proposals && !detector) {
    throw std::invalid_argument("attention source proposals requires a detector");
  }
  if (dataset.samples.empty()) throw std::invalid_argument("cannot cache attention for an empty dataset");
  const std::string desc = source.descriptor();
  const bool fractional = source.fractional();
  const std::string ext = fractional ? ".f32" : ".png";
  const int w = dataset.samples[0].image.width, h = dataset.samples[0].image.height;

  Index existing;
  if (read_index(dir / "index", existing) && existing.descriptor == desc &&
      existing.entries.size() == dataset.size()) {
    try {
      return load_attention_cache(dir, dataset);
    } catch (const std::exception&) {
      // Stale or damaged; fall through and rebuild.
    }
  }

  fs::create_directories(dir);
  fs::remove(dir / "index");
  bool resume = mode == CacheMode::resume;
  {
    std::ifstream marker(dir / "partial");
    std::string prev;
    if (!marker || !std::getline(marker, prev) || prev != desc) resume = false;
  }
  if (!resume) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto e = entry.path().extension();
      if (e == ".png" || e == ".f32" || e == ".tmp") fs::remove(entry.path());
    }
    std::ofstream marker(dir / "partial", std::ios::trunc);
    marker << desc << '\n';
  }

  AttentionCache cache;
  cache.descriptor = desc;
  cache.ids.resize(dataset.size());
  cache.maps.resize(dataset.size());
  std::vector<std::string> checksums(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), [&](int i) {
    const auto& id = dataset.samples[i].id;
    const fs::path path = dir / (id + ext);
    if (!(resume && fs::exists(path))) {
      write_map(path, attention_for_sample(dataset, i, source, detector, max_proposals), fractional);
    }
    cache.ids[i] = id;
    cache.maps[i] = read_map(path, fractional, w, h);
    checksums[i] = hex32(crc32_of_file(path));
  });

  std::ofstream index(dir / "index", std::ios::trunc);
  index << "awada-attention-index 1\n"
        << "descriptor " << desc << '\n'
        << "size " << w << ' ' << h << '\n'
        << "count " << dataset.size() << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    index << cache.ids[i] << ' ' << desc << ' ' << format_double(source.threshold) << ' '
          << checksums[i] << '\n';
  }
  index.close();
  if (!index) throw std::runtime_error("cannot write attention index in " + dir.string());
  fs::remove(dir / "partial");
  return cache;
}

AttentionCache load_attention_cache(const fs::path& dir, const DomainDataset& dataset) {
  Index index;
  if (!read_index(dir / "index", index)) {
    throw std::runtime_error("attention cache " + dir.string() +
                             " is missing or incomplete (no index); run build-attn");
  }
  if (index.entries.size() != dataset.size()) {
    throw std::runtime_error("attention cache " + dir.string() + " holds " +
                             std::to_string(index.entries.size()) + " maps for a dataset of " +
                             std::to_string(dataset.size()));
  }
  const bool fractional = index.descriptor.rfind("proposals(", 0) == 0 &&
                          index.descriptor.find("f=hard") == std::string::npos;
  AttentionCache cache;
  cache.descriptor = index.descriptor;
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    const auto& e = index.entries[i];
    if (e.id != dataset.samples[i].id) {
      throw std::runtime_error("attention cache " + dir.string() + ": entry " + std::to_string(i) +
                               " is for image '" + e.id + "' but the dataset has '" +
                               dataset.samples[i].id + "'");
    }
    const fs::path path = dir / (e.id + (fractional ? ".f32" : ".png"));
    if (!fs::exists(path)) {
      throw std::runtime_error("attention cache " + dir.string() + ": missing map for '" + e.id + "'");
    }
    if (hex32(crc32_of_file(path)) != e.checksum) {
      throw std::runtime_error("attention cache " + dir.string() + ": checksum mismatch for '" +
                               e.id + "'");
    }
    cache.ids.push_back(e.id);
    cache.maps.push_back(read_map(path, fractional, index.width, index.height));
  }
  return cache;
}

}  // namespace awada
