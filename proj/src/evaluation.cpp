#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "awada/pipeline.hpp"
#include "awada/rng.hpp"
#include "awada/text.hpp"

namespace awada {

namespace {

constexpr std::uint64_t kTagEvalDetector = 0x201;

std::string num(double v) { return format_double(v); }

}  // namespace

ApResult average_precision(const std::vector<std::vector<Proposal>>& predictions,
                           const std::vector<std::vector<Box>>& gt, double iou_thresh) {
  if (predictions.size() != gt.size()) {
    throw std::invalid_argument("average_precision: " + std::to_string(predictions.size()) +
                                " prediction lists for " + std::to_string(gt.size()) + " images");
  }
  std::size_t n_gt = 0, n_pred = 0;
  for (const auto& g : gt) n_gt += g.size();
  for (const auto& p : predictions) n_pred += p.size();
  ApResult r;
  if (n_gt == 0) {
    r.ap = n_pred == 0 ? 1.0 : 0.0;
    return r;
  }
  struct Entry {
    std::size_t image;
    const Proposal* p;
  };
  std::vector<Entry> all;
  all.reserve(n_pred);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (const auto& p : predictions[i]) all.push_back({i, &p});
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Entry& a, const Entry& b) { return a.p->confidence > b.p->confidence; });

  std::vector<std::vector<bool>> taken(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) taken[i].assign(gt[i].size(), false);
  std::size_t tp = 0;
  std::vector<double> precision, recall;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto& boxes = gt[all[k].image];
    int best = -1;
    double best_iou = iou_thresh;
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      if (taken[all[k].image][j]) continue;
      const double o = iou(all[k].p->box, boxes[j]);
      if (o >= best_iou) {
        best_iou = o;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      taken[all[k].image][best] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / (k + 1));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  // Interpolate precision from the right, then integrate over recall steps.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double prev_recall = 0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    r.ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
    r.curve.push_back({recall[k], precision[k]});
  }
  return r;
}

double compute_ap(const std::vector<std::vector<Proposal>>& predictions, const std::vector<std::vector<Box>>& gt,
                  double iou_thresh) {
  return average_precision(predictions, gt, iou_thresh).ap;
}

Fidelity oracle_fidelity(const std::vector<Image>& stylized, const DomainDataset& originals,
                         const StyleTransform& style) {
  if (stylized.size() != originals.size()) {
    throw std::invalid_argument("oracle_fidelity: " + std::to_string(stylized.size()) + " stylized images for " +
                                std::to_string(originals.size()) + " originals");
  }
  if (!originals.labeled()) throw std::invalid_argument("oracle_fidelity needs masks");
  double fg = 0, bg = 0;
  std::size_t nfg = 0, nbg = 0;
  for (std::size_t i = 0; i < stylized.size(); ++i) {
    const Sample& s = originals.samples[i];
    const Image oracle = apply_style(s.image, style);
    const Image& g = stylized[i];
    if (g.width != oracle.width || g.height != oracle.height || g.channels != 3) {
      throw std::invalid_argument("oracle_fidelity: image '" + s.id + "' has the wrong size");
    }
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        double d = 0;
        for (int c = 0; c < 3; ++c) d += std::abs(double(g.at(x, y, c)) - double(oracle.at(x, y, c)));
        d /= 3.0 * 255.0;
        if (s.mask.at(x, y, 0)) {
          fg += d;
          ++nfg;
        } else {
          bg += d;
          ++nbg;
        }
      }
    }
  }
  return {nfg ? fg / nfg : 0.0, nbg ? bg / nbg : 0.0};
}

double EvalReport::mean(double SeedResult::*field) const {
  if (seeds.empty()) return 0;
  double s = 0;
  for (const auto& r : seeds) s += r.*field;
  return s / seeds.size();
}

double EvalReport::stddev(double SeedResult::*field) const {
  if (seeds.size() < 2) return 0;
  const double m = mean(field);
  double s = 0;
  for (const auto& r : seeds) s += (r.*field - m) * (r.*field - m);
  return std::sqrt(s / (seeds.size() - 1));
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "model = " << model << "\n"
     << "placement = " << placement << "\n"
     << "attention = " << attention << "\n"
     << "gan_seed = " << gan_seed << "\n"
     << "config_hash = " << hex64(config_hash) << "\n"
     << "seeds = " << seeds.size() << "\n";
  for (const auto& r : seeds) {
    const std::string k = "seed." + std::to_string(r.seed) + ".";
    os << k << "fg_l1 = " << num(r.fg_l1) << "\n"
       << k << "bg_l1 = " << num(r.bg_l1) << "\n"
       << k << "ap = " << num(r.ap) << "\n"
       << k << "pr =";
    for (const auto& p : r.pr) os << ' ' << num(p.recall) << ':' << num(p.precision);
    os << "\n";
  }
  os << "mean.fg_l1 = " << num(mean(&SeedResult::fg_l1)) << "\n"
     << "mean.bg_l1 = " << num(mean(&SeedResult::bg_l1)) << "\n"
     << "mean.ap = " << num(mean(&SeedResult::ap)) << "\n"
     << "std.ap = " << num(stddev(&SeedResult::ap)) << "\n";
  return os.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "seed,fg_l1,bg_l1,ap\n";
  for (const auto& r : seeds) os << r.seed << ',' << num(r.fg_l1) << ',' << num(r.bg_l1) << ',' << num(r.ap) << "\n";
  return os.str();
}

EvalReport EvalReport::parse(const std::string& text) {
  EvalReport rep;
  std::map<std::uint64_t, SeedResult> by_seed;
  std::vector<std::uint64_t> order;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::size_t declared = 0;
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("report line " + std::to_string(lineno) + ": " + why);
  };
  auto to_double = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) fail("bad number '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + s + "'");
    }
    return 0.0;
  };
  auto to_u64 = [&](const std::string& s, int base) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used, base);
      if (used != s.size()) fail("bad integer '" + s + "'");
      return static_cast<std::uint64_t>(v);
    } catch (const std::logic_error&) {
      fail("bad integer '" + s + "'");
    }
    return std::uint64_t{0};
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find(" =");
    if (eq == std::string::npos) fail("expected 'key = value'");
    const std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 2);
    if (!value.empty() && value[0] == ' ') value.erase(0, 1);
    if (key == "model") {
      rep.model = value;
    } else if (key == "placement") {
      rep.placement = value;
    } else if (key == "attention") {
      rep.attention = value;
    } else if (key == "gan_seed") {
      rep.gan_seed = to_u64(value, 10);
    } else if (key == "config_hash") {
      rep.config_hash = to_u64(value, 16);
    } else if (key == "seeds") {
      declared = to_u64(value, 10);
    } else if (key.rfind("seed.", 0) == 0) {
      const auto dot = key.find('.', 5);
      if (dot == std::string::npos) fail("malformed key '" + key + "'");
      const std::uint64_t seed = to_u64(key.substr(5, dot - 5), 10);
      const std::string field = key.substr(dot + 1);
      if (!by_seed.count(seed)) order.push_back(seed);
      SeedResult& r = by_seed[seed];
      r.seed = seed;
      if (field == "fg_l1") {
        r.fg_l1 = to_double(value);
      } else if (field == "bg_l1") {
        r.bg_l1 = to_double(value);
      } else if (field == "ap") {
        r.ap = to_double(value);
      } else if (field == "pr") {
        std::istringstream ps(value);
        std::string pt;
        while (ps >> pt) {
          const auto colon = pt.find(':');
          if (colon == std::string::npos) fail("malformed PR point '" + pt + "'");
          r.pr.push_back({to_double(pt.substr(0, colon)), to_double(pt.substr(colon + 1))});
        }
      } else {
        fail("unknown field '" + field + "'");
      }
    } else if (key.rfind("mean.", 0) == 0 || key.rfind("std.", 0) == 0) {
      to_double(value);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (rep.model.empty()) throw std::invalid_argument("report has no 'model' line");
  for (auto s : order) rep.seeds.push_back(by_seed[s]);
  if (rep.seeds.size() != declared) {
    throw std::invalid_argument("report declares " + std::to_string(declared) + " seeds but lists " +
                                std::to_string(rep.seeds.size()));
  }
  for (const auto& r : rep.seeds) {
    if (r.ap < 0 || r.ap > 1 || r.fg_l1 < 0 || r.bg_l1 < 0) {
      throw std::invalid_argument("report seed " + std::to_string(r.seed) + " has out-of-range metrics");
    }
  }
  return rep;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (name + ".txt"), std::ios::binary) << report.to_text();
  std::ofstream(dir / (name + ".csv"), std::ios::binary) << report.to_csv();
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read report " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return EvalReport::parse(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

EvalReport evaluate_generator(const GeneratorNet& g_st, const DomainDataset& source, const DomainDataset& source_val,
                              const DomainDataset& target_val, const AwadaConfig& config, const std::string& model) {
  EvalReport rep;
  rep.model = model;
  rep.gan_seed = config.gan_seed;
  rep.config_hash = config.hash();
  const std::vector<Image> train_images = stylize(g_st, source);
  const Fidelity fid = oracle_fidelity(stylize(g_st, source_val), source_val, config.style_transform());
  std::vector<std::vector<Box>> labels;
  for (const auto& s : source.samples) labels.push_back(s.boxes);
  std::vector<std::vector<Box>> target_gt;
  for (const auto& s : target_val.samples) target_gt.push_back(s.boxes);
  for (std::uint64_t seed : config.eval_seeds) {
    const ProposalDetector det = train_detector("final", train_images, labels, derive_seed(seed, kTagEvalDetector),
                                                config.det_steps, config.lr_det);
    const ApResult ap = average_precision(detect_all(det, target_val, config.max_proposals), target_gt);
    rep.seeds.push_back({seed, fid.fg_l1, fid.bg_l1, ap.ap, ap.curve});
  }
  return rep;
}

}  // namespace awada
