#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "awada/image_io.hpp"
#include "awada/pipeline.hpp"
#include "export.hpp"

namespace fs = std::filesystem;
using namespace awada;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Common {
  std::string workdir = ".";
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool quiet = false;
};

struct Args {
  Common common;
  std::string out;
  int n = 0;
  int steps = 0;
  bool rebuild = false;
  std::string model = "awada";
  std::string split = "source_val";
  std::string grid;
  std::vector<std::string> reports;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--workdir,-w", c.workdir, "Working directory; relative paths resolve against it");
  sub->add_option("--config,-c", c.config, "Config file of 'key = value' lines");
  sub->add_option("--set", c.sets, "Config override 'key=value' (repeatable, applied after the file)");
  sub->add_option("--seed", c.seed, "Seed for this stage (falls back to AWADA_SEED)");
  sub->add_flag("--force", c.force, "Accept artifacts written under a different config");
  sub->add_flag("--quiet,-q", c.quiet, "No progress lines on stderr");
}

fs::path resolve(const Common& c, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(c.workdir) / path;
}

std::optional<std::uint64_t> effective_seed(const Common& c) {
  if (c.seed) return c.seed;
  if (const char* env = std::getenv("AWADA_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::logic_error&) {
    }
    throw UsageError(std::string("AWADA_SEED must be a non-negative integer, got '") + env + "'");
  }
  return std::nullopt;
}

// defaults < config file < flags
AwadaConfig build_config(const std::string& command, const Args& a) {
  AwadaConfig c;
  try {
    if (!a.common.config.empty()) c.load_file(resolve(a.common, a.common.config));
    for (const auto& kv : a.common.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (const auto seed = effective_seed(a.common)) {
      if (command == "gen-data") {
        c.data_seed = *seed;
      } else if (command == "train-detectors") {
        c.det_seed = *seed;
      } else if (command == "build-attn") {
        c.attention.seed = *seed;
      } else if (command == "stylize" || command == "eval") {
        c.eval_seeds = {*seed};
      } else if (command != "export-plots") {
        c.gan_seed = *seed;
      }
    }
    if (a.n > 0) c.n_source = c.n_target = a.n;
    if (a.steps > 0) c.gan_steps = a.steps;
    c.validate();
  } catch (const UsageError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::vector<fs::path> stage_inputs(const std::string& command, const Workspace& ws, const Args& a) {
  std::vector<fs::path> in;
  const bool needs_data = command != "gen-data" && command != "export-plots";
  if (needs_data) {
    for (const char* split : {"source", "target", "source_val", "target_val", "target_labels"}) {
      in.push_back(ws.dataset(split) / "manifest");
    }
  }
  if (command == "train-detectors" || command == "train-awada" || command == "ablate") in.push_back(ws.baseline());
  if (command == "build-attn" || command == "ablate") {
    in.push_back(ws.detector("source"));
    in.push_back(ws.detector("stylized"));
  }
  if (command == "train-awada") {
    in.push_back(ws.attention("source") / "index");
    in.push_back(ws.attention("target") / "index");
  }
  if (command == "stylize" || command == "eval") {
    if (a.model == "baseline") {
      in.push_back(ws.baseline());
    } else if (a.model == "awada") {
      in.push_back(ws.awada());
    } else {
      in.push_back(resolve(a.common, a.model));
    }
  }
  if (command == "export-plots") {
    for (const auto& r : a.reports) in.push_back(resolve(a.common, r));
  }
  return in;
}

// git blob id of a listing with one "<path> <blob id>" line per input.
std::string inputs_hash(const std::vector<fs::path>& inputs) {
  std::string listing;
  for (const auto& p : inputs) {
    const std::string id = fs::exists(p) ? git_blob_hash(read_file_bytes(p)) : "missing";
    listing += p.generic_string() + " " + id + "\n";
  }
  return git_blob_hash(std::span(reinterpret_cast<const std::uint8_t*>(listing.data()), listing.size()));
}

void append_provenance(const fs::path& workdir, const std::string& command, const AwadaConfig* config,
                       const std::string& seed, const std::string& inputs, int code) {
  std::error_code ec;
  fs::create_directories(workdir, ec);
  std::ofstream log(workdir / "runs.log", std::ios::app);
  log << "command=" << command << " config_hash=" << (config ? hex64(config->hash()) : "-") << " seed=" << seed
      << " inputs=" << inputs << " exit=" << code << "\n";
}

void print_report(const EvalReport& r) {
  std::cout << r.model << ": fg_l1=" << r.mean(&SeedResult::fg_l1) << " bg_l1=" << r.mean(&SeedResult::bg_l1)
            << " ap=" << r.mean(&SeedResult::ap) << " (std " << r.stddev(&SeedResult::ap) << ", "
            << r.seeds.size() << " seeds)\n";
}

int run(const std::string& command, const Args& a, const AwadaConfig& config) {
  const Workspace ws{a.common.workdir};
  StageOptions opt;
  opt.force = a.common.force;
  opt.log = a.common.quiet ? nullptr : &std::cerr;
  opt.cache_mode = a.rebuild ? CacheMode::rebuild : CacheMode::resume;

  if (command == "gen-data") {
    const Workspace out{a.out.empty() ? fs::path(a.common.workdir) : resolve(a.common, a.out)};
    stage0_generate_data(config, out);
    std::cout << "wrote datasets to " << (out.root / "data").string() << "\n";
  } else if (command == "train-baseline") {
    stage1_train_baseline(config, ws, opt);
    std::cout << "wrote " << ws.baseline().string() << "\n";
  } else if (command == "train-detectors") {
    const Detectors d = stage2_train_detectors(config, ws, opt);
    std::cout << "source detector AP on held-out source: " << d.source_val_ap << "\n";
  } else if (command == "build-attn") {
    const Caches c = stage3_build_caches(config, ws, opt);
    std::cout << "attention caches (" << c.source.descriptor << "): " << c.source.maps.size() << " source, "
              << c.target.maps.size() << " target\n";
  } else if (command == "train-awada") {
    stage4_train_awada(config, ws, opt);
    std::cout << "wrote " << ws.awada().string() << "\n";
  } else if (command == "stylize") {
    Checkpoint ck;
    const fs::path model = a.model == "baseline" ? ws.baseline()
                           : a.model == "awada"  ? ws.awada()
                                                 : resolve(a.common, a.model);
    if (!fs::exists(model)) {
      throw MissingArtifact("model not found at " + model.string(),
                            a.model == "baseline" ? "train-baseline" : "train-awada");
    }
    ck = load_checkpoint(model);
    const Data data = load_data(ws);
    DomainDataset split;
    if (a.split == "source") {
      split = data.source;
    } else if (a.split == "source_val") {
      split = data.source_val;
    } else {
      throw UsageError("--split must be source or source_val");
    }
    const std::string name = a.model == "baseline" || a.model == "awada" ? a.model : model.stem().string();
    const fs::path out = a.out.empty() ? ws.root / "stylized" / name : resolve(a.common, a.out);
    fs::create_directories(out);
    const auto images = stylize(generator_from_checkpoint(config, ck), split);
    for (std::size_t i = 0; i < images.size(); ++i) write_png(out / (split.samples[i].id + ".png"), images[i]);
    std::cout << "wrote " << images.size() << " images to " << out.string() << "\n";
  } else if (command == "eval") {
    print_report(stage5_stylize_and_eval(config, ws, a.model, opt));
  } else if (command == "ablate") {
    for (const auto& r : run_ablation(a.grid, config, ws, opt)) print_report(r);
  } else if (command == "export-plots") {
    if (a.reports.empty()) {
      std::cerr << "warning: no reports given; nothing exported\n";
      return 0;
    }
    std::vector<fs::path> paths;
    for (const auto& r : a.reports) paths.push_back(resolve(a.common, r));
    const fs::path out = resolve(a.common, a.out.empty() ? "plots" : a.out);
    for (const auto& p : cli::export_plots(paths, out)) std::cout << "wrote " << p.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-weighted adversarial style transfer for detection, run as separate stages"};
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();
  Args a;

  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {
      {"gen-data", "Generate the synthetic source/target benchmark"},
      {"train-baseline", "Train the segmenter and the unweighted style-transfer GAN"},
      {"train-detectors", "Train detectors on raw and on baseline-stylized source images"},
      {"build-attn", "Precompute attention maps for source and target images"},
      {"train-awada", "Train the attention-weighted style-transfer GAN"},
      {"stylize", "Write stylized source images with a trained generator"},
      {"eval", "Score a generator: fidelity to the style oracle and detector AP on target"},
      {"ablate", "Run a named ablation grid"},
      {"export-plots", "Render SVG plots and CSV tables from report files"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->option_defaults()->always_capture_default();
    add_common(sub, a.common);
    subs[s.name] = sub;
  }
  subs["gen-data"]->add_option("--out,-o", a.out, "Workspace to write data/ into (default: the workdir)");
  subs["gen-data"]->add_option("--n", a.n, "Source and target image count (0 keeps the config value)");
  subs["train-baseline"]->add_option("--steps", a.steps, "GAN steps (0 keeps the config value)");
  subs["train-awada"]->add_option("--steps", a.steps, "GAN steps (0 keeps the config value)");
  subs["build-attn"]->add_flag("--rebuild", a.rebuild, "Discard partial caches instead of resuming");
  subs["stylize"]->add_option("--model,-m", a.model, "baseline, awada, or a checkpoint path");
  subs["stylize"]->add_option("--split", a.split, "source or source_val");
  subs["stylize"]->add_option("--out,-o", a.out, "Output directory (default: stylized/<model>)");
  subs["eval"]->add_option("--model,-m", a.model, "baseline, awada, or a checkpoint path");
  subs["ablate"]->add_option("--grid,-g", a.grid, "table3, table4, table5 or accum")->required();
  subs["export-plots"]->add_option("--out,-o", a.out, "Output directory (default: plots)");
  subs["export-plots"]->add_option("reports", a.reports, "Report .txt files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::optional<AwadaConfig> config;
  std::string seed = "-";
  int code = 0;
  try {
    config = build_config(command, a);
    if (command == "ablate") {
      try {
        ablation_grid(a.grid, *config);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
    }
    if (const auto s = effective_seed(a.common)) seed = std::to_string(*s);
    code = run(command, a, *config);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "run '" << argv[0] << " " << command << " --help'\n";
    code = 1;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 2;
  }
  std::string inputs = "-";
  try {
    inputs = inputs_hash(stage_inputs(command, Workspace{a.common.workdir}, a));
  } catch (const std::exception&) {
  }
  append_provenance(a.common.workdir, command, config ? &*config : nullptr, seed, inputs, code);
  return code;
}
