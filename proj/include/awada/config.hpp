#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "awada/adam.hpp"
#include "awada/attention.hpp"
#include "awada/losses.hpp"
#include "awada/synthdata.hpp"

namespace awada {

/// Everything a run depends on. Text form is one `key = value` per line.
struct AwadaConfig {
  // data
  int n_source = 200;
  int n_target = 200;
  int n_val = 50;
  std::uint64_t data_seed = 1;
  std::string style = "fog";  // fog | colorshift
  double fog_beta = 2.0;
  double fog_airlight = 0.8;

  // style-transfer GAN
  int patch = 32;
  int batch = 2;
  int gan_epochs = 20;
  int gan_steps = 0;  // overrides gan_epochs when > 0
  std::uint64_t gan_seed = 1;
  double lr_gan = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  GanForm gan_form = GanForm::least_squares;
  LossWeights weights;
  bool semantic = true;
  bool semantic_bidirectional = false;
  bool instance_norm = false;
  bool row_coordinate = true;  // generators and discriminators see the image row
  bool fresh_init = true;

  // frozen segmenter F
  int seg_steps = 300;
  std::uint64_t seg_seed = 11;
  double lr_seg = 1e-3;

  // toy detectors
  int det_steps = 1200;
  std::uint64_t det_seed = 1;
  double lr_det = 1e-3;
  int max_proposals = 16;

  // attention
  AwmPlacement placement;
  AttentionSource attention;
  bool awm_normalize = false;

  // evaluation
  std::vector<std::uint64_t> eval_seeds{1, 2, 3};
  std::vector<std::uint64_t> grid_gan_seeds{1, 2, 3};

  void validate() const;
  int total_gan_steps() const;
  StyleTransform style_transform() const;
  BenchmarkSpec benchmark_spec() const;
  AdamOptions gan_adam() const;

  /// Sets one key from text; throws naming the key for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// Canonical text (every key, fixed order).
  std::string to_text() const;
  /// Applies a `key = value` file on top of the current values.
  void load_file(const std::filesystem::path& path);

  /// Hash of the keys a stage's artifacts depend on.
  enum class Scope { data, baseline, detectors, attention, awada, all };
  std::uint64_t hash(Scope scope = Scope::all) const;
};

}  // namespace awada
