#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "awada/geometry.hpp"
#include "awada/image_io.hpp"
#include "awada/tensor.hpp"

namespace awada {

class ProposalDetector;
struct DomainDataset;

/// Per-pixel foreground weights in [0, 1], row-major.
struct AttentionMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  AttentionMap() = default;
  AttentionMap(int w, int h, double fill = 0.0);

  double at(int u, int v) const { return values[std::size_t(v) * width + u]; }
  double& at(int u, int v) { return values[std::size_t(v) * width + u]; }
  double foreground_fraction() const;
  bool operator==(const AttentionMap&) const = default;
};

/// How the confidences covering a pixel are combined into one value.
enum class Accumulation { hard, mean, median, max };

std::string to_string(Accumulation f);
Accumulation accumulation_from_string(const std::string& s);

/// Where attention maps come from.
struct AttentionSource {
  enum class Kind { detector_proposals, gt_boxes, gt_boxes_inflated, gt_masks, random, all_ones };
  Kind kind = Kind::detector_proposals;
  double threshold = 0.5;   // minimum proposal confidence c
  double factor = 1.2;      // inflation for gt_boxes_inflated
  double fraction = 0.3;    // foreground probability for random
  std::uint64_t seed = 7;   // random
  Accumulation accumulation = Accumulation::hard;

  void validate() const;
  /// Canonical text form, e.g. "proposals(c=0.5,f=hard)" or "random(p=0.3,seed=7)".
  std::string descriptor() const;
  /// Parses the names used on the command line: proposals, gt_boxes,
  /// gt_inflate, gt_masks, random, ones.
  static Kind kind_from_string(const std::string& s);
  /// True when cached maps may hold values other than 0 and 1.
  bool fractional() const;
};

/// For each pixel, S = confidences >= c of the proposals whose box contains
/// it. hard: 1 if S is non-empty; mean/median/max: that statistic of S
/// (0 when empty), clamped to [0, 1].
AttentionMap build_attention_map(std::span<const Proposal> proposals, double threshold, int width,
                                 int height, Accumulation fn);

/// Scales each box about its centre by `factor`, clips to the image, and
/// drops boxes that end up with zero area (counted in `dropped`).
std::vector<Box> inflate_boxes(std::span<const Box> boxes, double factor, int width, int height,
                               int* dropped = nullptr);

/// Each pixel independently 1 with probability p.
AttentionMap random_mask(double p, int width, int height, std::uint64_t seed);

/// Filled rectangles; throws when a box leaves the image.
AttentionMap mask_from_gt(std::span<const Box> boxes, int width, int height);
/// Copy of a binary 1-channel mask (any non-zero pixel is foreground).
AttentionMap mask_from_gt(const Image& mask);

/// Crops `crop` from the map and resamples it to out_w x out_h with
/// nearest-neighbour lookup at output pixel centres:
/// src = crop.x + floor((j + 0.5) * crop.w / out_w).
AttentionMap crop_resize(const AttentionMap& map, const Rect& crop, int out_w, int out_h);

/// (1 / (W*H)) * sum(loss * attn). loss_map is [H,W] or [1,1,H,W].
Tensor awm_weight(const Tensor& loss_map, const AttentionMap& attn);

/// Stacks equally sized maps into a constant [N,1,H,W] tensor.
Tensor attention_tensor(std::span<const AttentionMap> maps);

/// Maps rounded to what the cache stores: 8-bit levels for binary sources,
/// 32-bit floats for fractional ones.
AttentionMap to_storage_precision(const AttentionMap& map, bool fractional);

struct AttentionCache {
  std::string descriptor;
  std::vector<std::string> ids;
  std::vector<AttentionMap> maps;
};

enum class CacheMode { resume, rebuild };

/// Builds one map per image under dir (`<id>.png` or `<id>.f32`) and writes
/// `dir/index` last. An existing complete index with the same descriptor is
/// reused; a partial cache is either resumed (existing files kept) or
/// rebuilt. The returned maps are the cached values.
AttentionCache precompute_attention_cache(const DomainDataset& dataset,
                                          const AttentionSource& source,
                                          const ProposalDetector* detector,
                                          const std::filesystem::path& dir,
                                          CacheMode mode = CacheMode::resume,
                                          int max_proposals = 16);

/// Loads and verifies a complete cache; the ids must match `dataset` in order.
AttentionCache load_attention_cache(const std::filesystem::path& dir, const DomainDataset& dataset);

/// Builds the map for one image without touching disk.
AttentionMap attention_for_sample(const DomainDataset& dataset, std::size_t index,
                                  const AttentionSource& source, const ProposalDetector* detector,
                                  int max_proposals = 16);

}  // namespace awada
