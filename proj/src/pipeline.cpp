#include "awada/pipeline.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "awada/rng.hpp"

namespace fs = std::filesystem;

namespace awada {

namespace {

constexpr std::uint64_t kTagStageDetector = 0x301;

const char* const kSplits[] = {"source", "target", "source_val", "target_val", "target_labels"};

void progress(const StageOptions& opt, const std::string& line) {
  if (opt.log) *opt.log << line << std::endl;
}

Checkpoint load_required(const fs::path& path, const std::string& what, const std::string& stage) {
  if (!fs::exists(path)) throw MissingArtifact(what + " not found at " + path.string(), stage);
  return load_checkpoint(path);
}

void check_data(const AwadaConfig& c, const Data& d) {
  if (d.source.seed != c.data_seed || static_cast<int>(d.source.size()) != c.n_source ||
      static_cast<int>(d.target.size()) != c.n_target || static_cast<int>(d.source_val.size()) != c.n_val) {
    throw std::runtime_error("datasets in the workspace do not match the config (seed " + std::to_string(c.data_seed) +
                             ", " + std::to_string(c.n_source) + "/" + std::to_string(c.n_target) +
                             " images); rerun gen-data");
  }
}

GeneratorConfig gen_config(const AwadaConfig& c) {
  GeneratorConfig g;
  g.instance_norm = c.instance_norm;
  g.row_coordinate = c.row_coordinate;
  return g;
}

SegmenterNet segmenter_from(const Checkpoint& ck) {
  SegmenterNet seg("seg", 0);
  restore_parameters(ck, "param", seg.parameters());
  seg.freeze();
  return seg;
}

void store_values(Checkpoint& ck, const std::string& name, const LossValues& v) {
  ck.blocks[name] = {v.disc, v.gan_st, v.gan_ts, v.cycle, v.semantic, v.total};
}

std::string probe_text(const Checkpoint& ck) {
  static const char* const names[] = {"disc", "gan_st", "gan_ts", "cycle", "semantic", "total"};
  std::ostringstream os;
  os.precision(17);
  for (const char* when : {"initial", "final"}) {
    const auto& v = ck.block(std::string("probe/") + when);
    for (std::size_t i = 0; i < v.size(); ++i) os << when << '.' << names[i] << " = " << v[i] << "\n";
  }
  return os.str();
}

std::optional<Checkpoint> usable_partial(const fs::path& dir, const std::string& stage, std::uint64_t hash,
                                         const StageOptions& opt) {
  const fs::path partial = dir / "partial.awck";
  if (!fs::exists(partial)) return std::nullopt;
  try {
    Checkpoint ck = load_checkpoint(partial);
    if (ck.stage == stage + "-partial" && ck.config_hash == hash) {
      progress(opt, stage + ": resuming from step " + std::to_string(ck.integer("gan/step")));
      return ck;
    }
  } catch (const std::exception& e) {
    progress(opt, stage + ": ignoring unreadable partial checkpoint (" + e.what() + ")");
  }
  progress(opt, stage + ": discarding partial checkpoint from another configuration");
  return std::nullopt;
}

// Drives a trainer to the configured step count, keeping a step log and a
// resumable partial checkpoint next to the final model.
Checkpoint run_gan(GanTrainer& trainer, const std::string& stage, const fs::path& model_path, std::uint64_t hash,
                   const StageOptions& opt, const SegmenterNet* seg, const Data& data, std::int64_t total_steps,
                   const std::optional<Checkpoint>& resume) {
  const fs::path dir = model_path.parent_path();
  fs::create_directories(dir);
  const fs::path log_path = dir / (model_path.stem().string() + ".steps.log");

  std::vector<std::string> kept;
  std::vector<double> initial;
  if (resume) {
    trainer.restore(*resume);
    initial = resume->block("probe/initial");
    std::ifstream old(log_path);
    std::string line;
    while (std::getline(old, line) && static_cast<std::int64_t>(kept.size()) < trainer.steps_done()) {
      kept.push_back(line);
    }
  } else {
    const LossValues v = trainer.probe();
    initial = {v.disc, v.gan_st, v.gan_ts, v.cycle, v.semantic, v.total};
  }
  std::ofstream log(log_path, std::ios::trunc);
  for (const auto& l : kept) log << l << "\n";

  auto snapshot = [&](const std::string& tag) {
    Checkpoint ck;
    ck.stage = tag;
    ck.config_hash = hash;
    trainer.save(ck);
    if (seg) store_parameters(ck, "param", seg->parameters());
    ck.blocks["probe/initial"] = initial;
    return ck;
  };

  while (trainer.steps_done() < total_steps) {
    trainer.step();
    log << format_step(trainer.last_record(), data.source, data.target) << "\n";
    const std::int64_t done = trainer.steps_done();
    if (done % 100 == 0 || done == total_steps) {
      const auto& l = trainer.last_record().losses;
      progress(opt, stage + " step " + std::to_string(done) + "/" + std::to_string(total_steps) +
                        " disc=" + std::to_string(l.disc) + " total=" + std::to_string(l.total));
    }
    if (opt.checkpoint_every > 0 && done % opt.checkpoint_every == 0 && done < total_steps) {
      log.flush();
      save_checkpoint(snapshot(stage + "-partial"), dir / "partial.awck");
    }
  }
  log.close();

  Checkpoint ck = snapshot(stage);
  store_values(ck, "probe/final", trainer.probe());
  save_checkpoint(ck, model_path);
  fs::remove(dir / "partial.awck");
  std::ofstream(dir / (model_path.stem().string() + ".probe.txt"), std::ios::trunc) << probe_text(ck);
  return ck;
}

fs::path attn_dir(const Workspace& ws, const std::optional<fs::path>& root) {
  return root.value_or(ws.root / "attn");
}

}  // namespace

MissingArtifact::MissingArtifact(const std::string& what, std::string stage)
    : std::runtime_error(what + " (run '" + stage + "' first)"), stage_(std::move(stage)) {}

void stage0_generate_data(const AwadaConfig& config, const Workspace& ws) {
  config.validate();
  const Benchmark b = generate_benchmark(config.benchmark_spec(), config.data_seed);
  write_dataset(b.source, ws.dataset("source"));
  write_dataset(b.target, ws.dataset("target"));
  write_dataset(b.source_val, ws.dataset("source_val"));
  write_dataset(b.target_val, ws.dataset("target_val"));
  write_dataset(b.target_labels, ws.dataset("target_labels"));
}

Data load_data(const Workspace& ws) {
  for (const char* split : kSplits) {
    if (!fs::exists(ws.dataset(split) / "manifest")) {
      throw MissingArtifact(std::string("dataset '") + split + "' not found in " + ws.dataset(split).string(),
                            "gen-data");
    }
  }
  Data d;
  d.source = read_dataset(ws.dataset("source"));
  d.target = read_dataset(ws.dataset("target"));
  d.source_val = read_dataset(ws.dataset("source_val"));
  d.target_val = read_dataset(ws.dataset("target_val"));
  d.target_labels = read_dataset(ws.dataset("target_labels"));
  return d;
}

GeneratorNet generator_from_checkpoint(const AwadaConfig& config, const Checkpoint& ck) {
  GeneratorNet g("g_st", gen_config(config), 0);
  restore_parameters(ck, "param", g.parameters());
  for (auto& p : g.parameters()) p.set_requires_grad(false);
  return g;
}

Checkpoint stage1_train_baseline(const AwadaConfig& config, const Workspace& ws, const StageOptions& opt) {
  config.validate();
  const Data data = load_data(ws);
  check_data(config, data);
  const std::uint64_t hash = config.hash(AwadaConfig::Scope::baseline);
  const fs::path model = ws.baseline();
  const auto resume = usable_partial(model.parent_path(), "baseline", hash, opt);

  std::optional<SegmenterNet> seg;
  if (config.semantic) {
    if (resume) {
      seg = segmenter_from(*resume);
    } else {
      seg = train_segmenter(data.source, config);
      progress(opt, "segmenter pixel accuracy on held-out source: " +
                        std::to_string(segmenter_accuracy(*seg, data.source_val)));
    }
  }
  GanTrainer trainer(config, data.source, data.target, seg ? &*seg : nullptr, AwmPlacement::none(), {});
  return run_gan(trainer, "baseline", model, hash, opt, seg ? &*seg : nullptr, data, config.total_gan_steps(), resume);
}

Detectors stage2_train_detectors(const AwadaConfig& config, const Workspace& ws, const StageOptions& opt) {
  config.validate();
  const Data data = load_data(ws);
  check_data(config, data);
  const Checkpoint base = load_required(ws.baseline(), "baseline model", "train-baseline");
  check_config_hash(base, config.hash(AwadaConfig::Scope::baseline), opt.force);
  const GeneratorNet g = generator_from_checkpoint(config, base);

  std::vector<Image> raw;
  std::vector<std::vector<Box>> labels;
  for (const auto& s : data.source.samples) {
    raw.push_back(s.image);
    labels.push_back(s.boxes);
  }
  progress(opt, "training source detector");
  ProposalDetector det_src = train_detector("det_src", raw, labels, derive_seed(config.det_seed, kTagStageDetector, 1),
                                            config.det_steps, config.lr_det);
  progress(opt, "training stylized-source detector");
  ProposalDetector det_sty = train_detector("det_sty", stylize(g, data.source), labels,
                                            derive_seed(config.det_seed, kTagStageDetector, 2), config.det_steps,
                                            config.lr_det);
  std::vector<std::vector<Box>> val_gt;
  for (const auto& s : data.source_val.samples) val_gt.push_back(s.boxes);
  const double ap = compute_ap(detect_all(det_src, data.source_val, config.max_proposals), val_gt);
  progress(opt, "source detector AP on held-out source: " + std::to_string(ap));

  const std::uint64_t hash = config.hash(AwadaConfig::Scope::detectors);
  for (const auto& [which, det] : {std::pair<const char*, const ProposalDetector*>{"source", &det_src},
                                   std::pair<const char*, const ProposalDetector*>{"stylized", &det_sty}}) {
    Checkpoint ck;
    ck.stage = std::string("detector-") + which;
    ck.config_hash = hash;
    store_parameters(ck, "param", det->parameters());
    ck.blocks["metrics/source_val_ap"] = {ap};
    save_checkpoint(ck, ws.detector(which));
  }
  return {std::move(det_src), std::move(det_sty), ap};
}

Detectors load_detectors(const AwadaConfig& config, const Workspace& ws, bool force) {
  const std::uint64_t hash = config.hash(AwadaConfig::Scope::detectors);
  const Checkpoint src = load_required(ws.detector("source"), "source detector", "train-detectors");
  const Checkpoint sty = load_required(ws.detector("stylized"), "stylized-source detector", "train-detectors");
  check_config_hash(src, hash, force);
  check_config_hash(sty, hash, force);
  Detectors d{ProposalDetector("det_src", 0), ProposalDetector("det_sty", 0), src.block("metrics/source_val_ap").at(0)};
  restore_parameters(src, "param", d.source.parameters());
  restore_parameters(sty, "param", d.stylized.parameters());
  return d;
}

Caches stage3_build_caches(const AwadaConfig& config, const Workspace& ws, const StageOptions& opt,
                           const std::optional<fs::path>& attn_root) {
  config.validate();
  const Data data = load_data(ws);
  check_data(config, data);
  using Kind = AttentionSource::Kind;
  std::optional<Detectors> dets;
  if (config.attention.kind == Kind::detector_proposals) dets = load_detectors(config, ws, opt.force);
  const bool needs_labels = config.attention.kind == Kind::gt_boxes ||
                            config.attention.kind == Kind::gt_boxes_inflated || config.attention.kind == Kind::gt_masks;
  const fs::path root = attn_dir(ws, attn_root);
  progress(opt, "building attention caches (" + config.attention.descriptor() + ") in " + root.string());
  Caches c;
  c.source = precompute_attention_cache(data.source, config.attention, dets ? &dets->source : nullptr,
                                        root / "source", opt.cache_mode, config.max_proposals);
  c.target = precompute_attention_cache(needs_labels ? data.target_labels : data.target, config.attention,
                                        dets ? &dets->stylized : nullptr, root / "target", opt.cache_mode,
                                        config.max_proposals);
  return c;
}

Caches load_caches(const Workspace& ws, const Data& data, const std::optional<fs::path>& attn_root) {
  const fs::path root = attn_dir(ws, attn_root);
  for (const char* domain : {"source", "target"}) {
    if (!fs::exists(root / domain / "index")) {
      throw MissingArtifact(std::string(domain) + " attention cache not found in " + (root / domain).string(),
                            "build-attn");
    }
  }
  return {load_attention_cache(root / "source", data.source), load_attention_cache(root / "target", data.target)};
}

Checkpoint stage4_train_awada(const AwadaConfig& config, const Workspace& ws, const StageOptions& opt,
                              const std::optional<fs::path>& attn_root, const std::optional<fs::path>& out) {
  config.validate();
  const Data data = load_data(ws);
  check_data(config, data);
  const Caches caches = load_caches(ws, data, attn_root);
  if (caches.source.descriptor != config.attention.descriptor()) {
    throw std::runtime_error("attention cache holds " + caches.source.descriptor + " but the config asks for " +
                             config.attention.descriptor() + "; rerun build-attn");
  }
  const Checkpoint base = load_required(ws.baseline(), "baseline model", "train-baseline");
  check_config_hash(base, config.hash(AwadaConfig::Scope::baseline), opt.force);

  const std::uint64_t hash = config.hash(AwadaConfig::Scope::awada);
  const fs::path model = out.value_or(ws.awada());
  const auto resume = usable_partial(model.parent_path(), "awada", hash, opt);
  std::optional<SegmenterNet> seg;
  if (config.semantic) seg = segmenter_from(base);
  GanTrainer trainer(config, data.source, data.target, seg ? &*seg : nullptr, config.placement,
                     {&caches.source, &caches.target});
  if (!config.fresh_init && !resume) trainer.load_weights(base);
  return run_gan(trainer, "awada", model, hash, opt, seg ? &*seg : nullptr, data, config.total_gan_steps(), resume);
}

EvalReport stage5_stylize_and_eval(const AwadaConfig& config, const Workspace& ws, const std::string& model,
                                   const StageOptions& opt) {
  config.validate();
  const Data data = load_data(ws);
  check_data(config, data);
  Checkpoint ck;
  if (model == "baseline") {
    ck = load_required(ws.baseline(), "baseline model", "train-baseline");
  } else if (model == "awada") {
    ck = load_required(ws.awada(), "AWADA model", "train-awada");
  } else {
    ck = load_required(model, "model", "train-awada");
  }
  const bool is_baseline = ck.stage == "baseline";
  check_config_hash(ck, config.hash(is_baseline ? AwadaConfig::Scope::baseline : AwadaConfig::Scope::awada),
                    opt.force);
  const GeneratorNet g = generator_from_checkpoint(config, ck);
  progress(opt, "evaluating " + model + " over " + std::to_string(config.eval_seeds.size()) + " detector seeds");
  EvalReport rep = evaluate_generator(g, data.source, data.source_val, data.target_val, config,
                                      is_baseline ? "baseline" : "awada");
  rep.placement = is_baseline ? AwmPlacement::none().label() : config.placement.label();
  rep.attention = is_baseline ? "none" : config.attention.descriptor();
  const std::string name = (model == "baseline" || model == "awada") ? model : fs::path(model).stem().string();
  write_report(rep, ws.eval(), name);
  return rep;
}

std::vector<AblationRow> ablation_grid(const std::string& name, const AwadaConfig& base) {
  std::vector<AblationRow> rows;
  if (name == "table3") {
    for (const char* label : {"----", "x---", "-x--", "xx--", "xxx-", "xxxx"}) {
      AwadaConfig c = base;
      c.placement = AwmPlacement::from_label(label);
      rows.push_back({label, c});
    }
  } else if (name == "table4") {
    using Kind = AttentionSource::Kind;
    for (const auto& [label, kind] : {std::pair<const char*, Kind>{"gt_masks", Kind::gt_masks},
                                      {"gt_boxes", Kind::gt_boxes},
                                      {"gt_inflate", Kind::gt_boxes_inflated}}) {
      AwadaConfig c = base;
      c.attention.kind = kind;
      c.attention.factor = 1.2;
      rows.push_back({label, c});
    }
  } else if (name == "table5") {
    for (int pct : {10, 30, 50}) {
      AwadaConfig c = base;
      c.attention.kind = AttentionSource::Kind::random;
      c.attention.fraction = pct / 100.0;
      rows.push_back({"random_" + std::to_string(pct), c});
    }
  } else if (name == "accum") {
    for (auto f : {Accumulation::hard, Accumulation::mean, Accumulation::median, Accumulation::max}) {
      AwadaConfig c = base;
      c.attention.kind = AttentionSource::Kind::detector_proposals;
      c.attention.accumulation = f;
      rows.push_back({to_string(f), c});
    }
  } else {
    throw std::invalid_argument("unknown ablation grid '" + name + "' (table3, table4, table5, accum)");
  }
  return rows;
}

std::vector<EvalReport> run_ablation(const std::string& grid, const AwadaConfig& base, const Workspace& ws,
                                     const StageOptions& opt) {
  const auto rows = ablation_grid(grid, base);
  const Data data = load_data(ws);
  std::vector<EvalReport> reports;
  for (const auto& row : rows) {
    const fs::path dir = ws.root / "ablate" / grid / row.label;
    // Placement rows only move the weighting, so they share the main caches.
    const std::optional<fs::path> attn = grid == "table3" ? std::nullopt : std::optional<fs::path>(dir / "attn");
    if (grid != "table3" || !fs::exists(attn_dir(ws, attn) / "target" / "index")) {
      stage3_build_caches(row.config, ws, opt, attn);
    }
    progress(opt, "ablation " + grid + " row " + row.label);
    const Checkpoint ck = stage4_train_awada(row.config, ws, opt, attn, dir / "model.awck");
    EvalReport rep = evaluate_generator(generator_from_checkpoint(row.config, ck), data.source, data.source_val,
                                        data.target_val, row.config, grid + "/" + row.label);
    rep.placement = row.config.placement.label();
    rep.attention = row.config.attention.descriptor();
    write_report(rep, dir, "report");
    write_report(rep, ws.root / "ablate" / grid, row.label);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace awada
