#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "awada/geometry.hpp"
#include "awada/image_io.hpp"

namespace awada {

/// Procedural scene layout: smooth background gradient with low-amplitude
/// noise plus 1..N non-overlapping filled rectangles ("objects").
struct SceneSpec {
  int width = 64;
  int height = 64;
  int min_objects = 1;
  int max_objects = 4;
  int min_size = 5;
  int max_size = 16;
  double noise = 0.03;

  /// Throws std::invalid_argument for layouts that cannot be generated.
  void validate() const;
  std::string hash() const;
};

/// Deterministic, pixel-local domain shift. Values are handled in [0, 1].
struct StyleTransform {
  enum class Kind { fog, colorshift };
  Kind kind = Kind::fog;
  // fog: I' = I * exp(-beta * d) + airlight * (1 - exp(-beta * d)),
  // with depth proxy d = (H - y) / H (top rows are far away).
  double beta = 2.0;
  double airlight = 0.8;
  // colorshift: I' = M * I + b, row-major 3x3.
  std::array<double, 9> matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> bias{0, 0, 0};

  static StyleTransform fog(double beta, double airlight);
  static StyleTransform colorshift(std::array<double, 9> m, std::array<double, 3> b);
  std::string describe() const;
};

enum class Domain { source, target, target_eval, stylized_source };

std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct Sample {
  std::string id;
  Image image;             // RGB
  std::vector<Box> boxes;  // integer-valued, tight around each object
  Image mask;              // 1 channel, 0/1; empty when unlabeled
  bool operator==(const Sample&) const = default;
};

/// Ordered images of one domain. Labels are present iff the domain is
/// labeled (target images carry none; target_eval keeps them for scoring).
struct DomainDataset {
  Domain domain = Domain::source;
  std::uint64_t seed = 0;
  std::string spec_hash;
  std::vector<Sample> samples;

  bool labeled() const { return domain != Domain::target; }
  std::size_t size() const { return samples.size(); }
  bool operator==(const DomainDataset&) const = default;
};

/// Stream tags for disjoint per-image seeds.
enum class SeedStream : std::uint64_t { source = 1, target = 2, source_val = 3, target_val = 4 };

DomainDataset generate_scenes(int n, const SceneSpec& spec, std::uint64_t seed, SeedStream stream,
                              const std::string& id_prefix);
DomainDataset generate_source(int n, const SceneSpec& spec, std::uint64_t seed);

Image apply_style(const Image& image, const StyleTransform& t);
/// Styled copies with geometry and labels unchanged; `domain` tags the result.
DomainDataset apply_style(const DomainDataset& dataset, const StyleTransform& t, Domain domain);

/// The full two-domain benchmark. Source and target scenes come from
/// disjoint seed streams, so no pixel-aligned pair exists between them.
struct Benchmark {
  DomainDataset source;      // labeled training scenes
  DomainDataset target;      // styled, unlabeled
  DomainDataset source_val;  // held-out labeled source scenes
  DomainDataset target_val;  // styled, labels kept for evaluation only
  /// The target scenes with their labels kept. Only the ground-truth
  /// attention ablations read it; training never does.
  DomainDataset target_labels;
};

struct BenchmarkSpec {
  int n_source = 200;
  int n_target = 200;
  int n_val = 50;
  SceneSpec scene;
  StyleTransform style;
};

Benchmark generate_benchmark(const BenchmarkSpec& spec, std::uint64_t seed);

/// Simulated detector output around ground truth: each box survives with
/// probability 1 - miss_rate, jittered by up to jitter * size per edge, with
/// confidence in [0.5, 1]; per ground-truth slot a false positive appears
/// with probability false_rate, confidence in [0.3, 0.7].
std::vector<Proposal> jittered_proposals(const std::vector<Box>& boxes, double jitter,
                                         double miss_rate, double false_rate, std::uint64_t seed,
                                         int width, int height);

void write_dataset(const DomainDataset& dataset, const std::filesystem::path& dir);
DomainDataset read_dataset(const std::filesystem::path& dir);

}  // namespace awada
