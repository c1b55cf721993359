#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "awada/adam.hpp"
#include "awada/attention.hpp"
#include "awada/checkpoint.hpp"
#include "awada/config.hpp"
#include "awada/losses.hpp"
#include "awada/nets.hpp"
#include "awada/synthdata.hpp"

namespace awada {

/// Artifact locations under a working directory.
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path dataset(const std::string& split) const { return root / "data" / split; }
  std::filesystem::path baseline() const { return root / "baseline" / "model.awck"; }
  std::filesystem::path detector(const std::string& which) const {
    return root / "detectors" / (which + ".awck");
  }
  std::filesystem::path attention(const std::string& domain) const { return root / "attn" / domain; }
  std::filesystem::path awada() const { return root / "awada" / "model.awck"; }
  std::filesystem::path eval() const { return root / "eval"; }
};

/// A stage input is absent; `stage()` names the command that produces it.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::string& what, std::string stage);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// NaN or runaway loss during training.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossValues {
  double disc = 0;
  double gan_st = 0;
  double gan_ts = 0;
  double cycle = 0;
  double semantic = 0;
  double total = 0;
  bool operator==(const LossValues&) const = default;
};

struct BatchPlan {
  std::vector<int> source_index;
  std::vector<int> target_index;
  std::vector<Rect> source_crop;
  std::vector<Rect> target_crop;
  bool operator==(const BatchPlan&) const = default;
};

/// Images and patch rectangles of one training step. Each epoch visits a
/// seeded permutation of each dataset; crops are uniform top-left corners.
/// A pure function of its arguments, so resumed runs replay exactly.
BatchPlan plan_batch(std::uint64_t seed, std::int64_t step, int batch, int patch,
                     const DomainDataset& source, const DomainDataset& target);

struct StepRecord {
  std::int64_t step = 0;
  BatchPlan plan;
  // Rectangles cut from the attention maps (empty when no attention is used).
  std::vector<Rect> source_attn_crop;
  std::vector<Rect> target_attn_crop;
  LossValues losses;
};

std::string format_step(const StepRecord& r, const DomainDataset& source, const DomainDataset& target);

/// Trains the two generators and two discriminators by alternating a
/// discriminator update and a generator update per batch.
class GanTrainer {
 public:
  struct Attention {
    const AttentionCache* source = nullptr;
    const AttentionCache* target = nullptr;
  };

  /// `segmenter` may be null when config.semantic is off. Attention caches
  /// are required for every group `placement` weights.
  GanTrainer(const AwadaConfig& config, const DomainDataset& source, const DomainDataset& target,
             const SegmenterNet* segmenter, AwmPlacement placement, Attention attention);

  /// One discriminator step then one generator step on the next batch.
  LossValues step();
  void train(std::int64_t steps, const std::function<void(const StepRecord&)>& on_step = {});
  /// Losses on a fixed probe batch with the current parameters; no update.
  LossValues probe() const;

  std::int64_t steps_done() const { return step_; }
  const StepRecord& last_record() const { return last_; }

  const GeneratorNet& g_st() const { return g_st_; }
  const GeneratorNet& g_ts() const { return g_ts_; }
  std::vector<Tensor> generator_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;

  /// Parameters, optimizer moments and step counter.
  void save(Checkpoint& ck) const;
  void restore(const Checkpoint& ck);
  /// Copies network weights only (warm start).
  void load_weights(const Checkpoint& ck);

 private:
  struct Batch;
  Batch materialize(const BatchPlan& plan) const;
  Tensor disc_loss(const Batch& b, const Tensor& fake_t, const Tensor& fake_s, LossValues& v) const;
  LossComponents gen_losses(const Batch& b, const Tensor& fake_t, const Tensor& fake_s) const;

  AwadaConfig config_;
  const DomainDataset& source_;
  const DomainDataset& target_;
  const SegmenterNet* segmenter_;
  AwmPlacement placement_;
  Attention attention_;
  GeneratorNet g_st_, g_ts_;
  DiscriminatorNet d_s_, d_t_;
  mutable Adam adam_g_, adam_d_;
  std::int64_t step_ = 0;
  StepRecord last_;
};

SegmenterNet train_segmenter(const DomainDataset& source, const AwadaConfig& config);
/// Fraction of pixels whose argmax class matches the mask.
double segmenter_accuracy(const SegmenterNet& net, const DomainDataset& data);

ProposalDetector train_detector(const std::string& name, const std::vector<Image>& images,
                                const std::vector<std::vector<Box>>& boxes, std::uint64_t seed,
                                int steps, double lr, int batch = 2);

std::vector<Image> stylize(const GeneratorNet& g, const DomainDataset& data);
std::vector<std::vector<Proposal>> detect_all(const ProposalDetector& det, const DomainDataset& data,
                                              int max_out);

struct PrPoint {
  double recall = 0;
  double precision = 0;
  bool operator==(const PrPoint&) const = default;
};

struct ApResult {
  double ap = 0;
  std::vector<PrPoint> curve;
};

/// Single-class AP: predictions sorted by descending confidence (stable),
/// each matched to the unmatched ground truth of highest IoU >= iou_thresh,
/// area under the all-points interpolated precision-recall curve.
/// No ground truth: 1 without predictions, 0 with.
ApResult average_precision(const std::vector<std::vector<Proposal>>& predictions,
                           const std::vector<std::vector<Box>>& gt, double iou_thresh = 0.5);
double compute_ap(const std::vector<std::vector<Proposal>>& predictions,
                  const std::vector<std::vector<Box>>& gt, double iou_thresh = 0.5);

struct Fidelity {
  double fg_l1 = 0;
  double bg_l1 = 0;
};

/// Mean absolute difference (intensities in [0, 1], averaged over channels)
/// between stylized images and the analytic style of the originals, split
/// by the ground-truth masks.
Fidelity oracle_fidelity(const std::vector<Image>& stylized, const DomainDataset& originals,
                         const StyleTransform& style);

struct SeedResult {
  std::uint64_t seed = 0;
  double fg_l1 = 0;
  double bg_l1 = 0;
  double ap = 0;
  std::vector<PrPoint> pr;
  bool operator==(const SeedResult&) const = default;
};

struct EvalReport {
  std::string model;
  std::string placement;
  std::string attention;
  std::uint64_t gan_seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<SeedResult> seeds;

  double mean(double SeedResult::*field) const;
  double stddev(double SeedResult::*field) const;

  /// `key = value` lines; per-seed keys are `seed.<n>.<field>`.
  std::string to_text() const;
  /// Header `seed,fg_l1,bg_l1,ap` and one row per seed.
  std::string to_csv() const;
  /// Throws std::invalid_argument naming the offending line.
  static EvalReport parse(const std::string& text);

  bool operator==(const EvalReport&) const = default;
};

/// Writes <name>.txt and <name>.csv into dir.
void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& name);
EvalReport read_report(const std::filesystem::path& path);

/// Stylizes the source sets with a frozen generator, scores fidelity on the
/// held-out source images, and for every evaluation seed trains a fresh
/// detector on the stylized training images and scores it on labeled
/// target validation images.
EvalReport evaluate_generator(const GeneratorNet& g_st, const DomainDataset& source,
                              const DomainDataset& source_val, const DomainDataset& target_val,
                              const AwadaConfig& config, const std::string& model);

// ---- staged pipeline over a workspace ----

struct Data {
  DomainDataset source;
  DomainDataset target;
  DomainDataset source_val;
  DomainDataset target_val;
  DomainDataset target_labels;
};

struct StageOptions {
  bool force = false;              // accept checkpoints written under another config
  CacheMode cache_mode = CacheMode::resume;
  std::ostream* log = nullptr;     // progress lines
  std::int64_t checkpoint_every = 250;
};

void stage0_generate_data(const AwadaConfig& config, const Workspace& ws);
Data load_data(const Workspace& ws);

/// Segmenter plus the unweighted GAN. Resumes from a partial checkpoint.
Checkpoint stage1_train_baseline(const AwadaConfig& config, const Workspace& ws,
                                 const StageOptions& opt = {});

struct Detectors {
  ProposalDetector source;
  ProposalDetector stylized;
  double source_val_ap = 0;
};

Detectors stage2_train_detectors(const AwadaConfig& config, const Workspace& ws,
                                 const StageOptions& opt = {});
Detectors load_detectors(const AwadaConfig& config, const Workspace& ws, bool force = false);

struct Caches {
  AttentionCache source;
  AttentionCache target;
};

/// Attention caches for source and target images under `attn_root`
/// (defaults to the workspace's attn/ directory).
Caches stage3_build_caches(const AwadaConfig& config, const Workspace& ws, const StageOptions& opt = {},
                           const std::optional<std::filesystem::path>& attn_root = std::nullopt);
Caches load_caches(const Workspace& ws, const Data& data,
                   const std::optional<std::filesystem::path>& attn_root = std::nullopt);

/// Attention-weighted GAN; writes its model to `out` (defaults to the
/// workspace's awada/model.awck).
Checkpoint stage4_train_awada(const AwadaConfig& config, const Workspace& ws, const StageOptions& opt = {},
                              const std::optional<std::filesystem::path>& attn_root = std::nullopt,
                              const std::optional<std::filesystem::path>& out = std::nullopt);

/// Evaluates the generator stored in `model` ("baseline", "awada" or a path).
EvalReport stage5_stylize_and_eval(const AwadaConfig& config, const Workspace& ws, const std::string& model,
                                   const StageOptions& opt = {});

/// Rebuilds the source-to-target generator stored in a stage checkpoint.
GeneratorNet generator_from_checkpoint(const AwadaConfig& config, const Checkpoint& ck);

struct AblationRow {
  std::string label;
  AwadaConfig config;
};

/// Named presets: table3 (six placement rows), table4 (GT masks, boxes,
/// inflated boxes), table5 (random 10/30/50 %), accum (hard/mean/median/max).
std::vector<AblationRow> ablation_grid(const std::string& name, const AwadaConfig& base);

/// Runs stage3..stage5 for each row under ws/ablate/<grid>/<label>/ with the
/// shared baseline and detectors. Returns one report per row.
std::vector<EvalReport> run_ablation(const std::string& grid, const AwadaConfig& base, const Workspace& ws,
                                     const StageOptions& opt = {});

}  // namespace awada
