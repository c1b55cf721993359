#include "awada/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "awada/text.hpp"

namespace awada {

namespace {

enum Group { kData, kGan, kSeg, kDet, kAttn, kEval };

std::string fmt(double v) { return format_double(v); }

std::string fmt_list(const std::vector<std::uint64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0;
  std::size_t used = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument("config key '" + key + "': not a number: '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("config key '" + key + "': not an integer: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_seed(const std::string& key, const std::string& s) {
  const auto v = parse_int(key, s);
  if (v < 0) throw std::invalid_argument("config key '" + key + "': seeds must be non-negative");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw std::invalid_argument("config key '" + key + "': not a boolean: '" + s + "'");
}

std::vector<std::uint64_t> parse_list(const std::string& key, const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_seed(key, item));
  if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

std::string kind_name(AttentionSource::Kind k) {
  using K = AttentionSource::Kind;
  switch (k) {
    case K::detector_proposals: return "proposals";
    case K::gt_boxes: return "gt_boxes";
    case K::gt_boxes_inflated: return "gt_inflate";
    case K::gt_masks: return "gt_masks";
    case K::random: return "random";
    case K::all_ones: return "ones";
  }
  return "?";
}

struct Entry {
  const char* key;
  Group group;
  std::function<std::string(const AwadaConfig&)> get;
  std::function<void(AwadaConfig&, const std::string&, const std::string&)> set;
};

#define INT_ENTRY(k, g, field) \
  Entry{k, g, [](const AwadaConfig& c) { return std::to_string(c.field); }, \
        [](AwadaConfig& c, const std::string& key, const std::string& v) { c.field = static_cast<int>(parse_int(key, v)); }}
#define SEED_ENTRY(k, g, field) \
  Entry{k, g, [](const AwadaConfig& c) { return std::to_string(c.field); }, \
        [](AwadaConfig& c, const std::string& key, const std::string& v) { c.field = parse_seed(key, v); }}
#define REAL_ENTRY(k, g, field) \
  Entry{k, g, [](const AwadaConfig& c) { return fmt(c.field); }, \
        [](AwadaConfig& c, const std::string& key, const std::string& v) { c.field = parse_double(key, v); }}
#define BOOL_ENTRY(k, g, field) \
  Entry{k, g, [](const AwadaConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](AwadaConfig& c, const std::string& key, const std::string& v) { c.field = parse_bool(key, v); }}
#define LIST_ENTRY(k, g, field) \
  Entry{k, g, [](const AwadaConfig& c) { return fmt_list(c.field); }, \
        [](AwadaConfig& c, const std::string& key, const std::string& v) { c.field = parse_list(key, v); }}

const std::vector<Entry>& table() {
  static const std::vector<Entry> entries = {
      INT_ENTRY("n_source", kData, n_source),
      INT_ENTRY("n_target", kData, n_target),
      INT_ENTRY("n_val", kData, n_val),
      SEED_ENTRY("data_seed", kData, data_seed),
      Entry{"style", kData, [](const AwadaConfig& c) { return c.style; },
            [](AwadaConfig& c, const std::string& key, const std::string& v) {
              if (v != "fog" && v != "colorshift") {
                throw std::invalid_argument("config key '" + key + "': expected fog or colorshift");
              }
              c.style = v;
            }},
      REAL_ENTRY("fog_beta", kData, fog_beta),
      REAL_ENTRY("fog_airlight", kData, fog_airlight),

      INT_ENTRY("patch", kGan, patch),
      INT_ENTRY("batch", kGan, batch),
      INT_ENTRY("gan_epochs", kGan, gan_epochs),
      INT_ENTRY("gan_steps", kGan, gan_steps),
      SEED_ENTRY("gan_seed", kGan, gan_seed),
      REAL_ENTRY("lr_gan", kGan, lr_gan),
      REAL_ENTRY("beta1", kGan, beta1),
      REAL_ENTRY("beta2", kGan, beta2),
      Entry{"gan_form", kGan, [](const AwadaConfig& c) { return to_string(c.gan_form); },
            [](AwadaConfig& c, const std::string&, const std::string& v) { c.gan_form = gan_form_from_string(v); }},
      REAL_ENTRY("a1", kGan, weights.a1),
      REAL_ENTRY("a2", kGan, weights.a2),
      REAL_ENTRY("a3", kGan, weights.a3),
      REAL_ENTRY("a4", kGan, weights.a4),
      BOOL_ENTRY("semantic", kGan, semantic),
      BOOL_ENTRY("semantic_bidirectional", kGan, semantic_bidirectional),
      BOOL_ENTRY("instance_norm", kGan, instance_norm),
      BOOL_ENTRY("row_coordinate", kGan, row_coordinate),
      BOOL_ENTRY("fresh_init", kAttn, fresh_init),

      INT_ENTRY("seg_steps", kSeg, seg_steps),
      SEED_ENTRY("seg_seed", kSeg, seg_seed),
      REAL_ENTRY("lr_seg", kSeg, lr_seg),

      INT_ENTRY("det_steps", kDet, det_steps),
      SEED_ENTRY("det_seed", kDet, det_seed),
      REAL_ENTRY("lr_det", kDet, lr_det),
      INT_ENTRY("max_proposals", kDet, max_proposals),

      Entry{"placement", kAttn, [](const AwadaConfig& c) { return c.placement.label(); },
            [](AwadaConfig& c, const std::string&, const std::string& v) {
              c.placement = AwmPlacement::from_label(v);
            }},
      Entry{"attn_source", kAttn, [](const AwadaConfig& c) { return kind_name(c.attention.kind); },
            [](AwadaConfig& c, const std::string&, const std::string& v) {
              c.attention.kind = AttentionSource::kind_from_string(v);
            }},
      REAL_ENTRY("threshold", kAttn, attention.threshold),
      REAL_ENTRY("inflate", kAttn, attention.factor),
      REAL_ENTRY("random_p", kAttn, attention.fraction),
      SEED_ENTRY("random_seed", kAttn, attention.seed),
      Entry{"accumulation", kAttn, [](const AwadaConfig& c) { return to_string(c.attention.accumulation); },
            [](AwadaConfig& c, const std::string&, const std::string& v) {
              c.attention.accumulation = accumulation_from_string(v);
            }},
      BOOL_ENTRY("awm_normalize", kAttn, awm_normalize),

      LIST_ENTRY("eval_seeds", kEval, eval_seeds),
      LIST_ENTRY("grid_gan_seeds", kEval, grid_gan_seeds),
  };
  return entries;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : table()) {
    if (key == e.key) return e;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool in_scope(Group g, AwadaConfig::Scope scope) {
  using S = AwadaConfig::Scope;
  switch (scope) {
    case S::data: return g == kData;
    case S::baseline: return g == kData || g == kGan || g == kSeg;
    case S::detectors: return g == kData || g == kGan || g == kSeg || g == kDet;
    case S::attention:
    case S::awada: return g != kEval;
    case S::all: return true;
  }
  return true;
}

}  // namespace

void AwadaConfig::validate() const {
  if (n_source < 1 || n_target < 1 || n_val < 1) throw std::invalid_argument("dataset sizes must be positive");
  SceneSpec spec;
  if (patch < 16 || patch % 8 != 0 || patch > spec.width || patch > spec.height) {
    throw std::invalid_argument("patch must be a multiple of 8 in [16, " + std::to_string(spec.width) + "]");
  }
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  if (gan_epochs < 0 || gan_steps < 0 || seg_steps < 0 || det_steps < 0) {
    throw std::invalid_argument("step and epoch counts must be non-negative");
  }
  if (lr_gan <= 0 || lr_seg <= 0 || lr_det <= 0) throw std::invalid_argument("learning rates must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (max_proposals < 1) throw std::invalid_argument("max_proposals must be at least 1");
  weights.validate();
  attention.validate();
}

int AwadaConfig::total_gan_steps() const {
  if (gan_steps > 0) return gan_steps;
  return gan_epochs * ((n_source + batch - 1) / batch);
}

StyleTransform AwadaConfig::style_transform() const {
  if (style == "colorshift") {
    return StyleTransform::colorshift({0.6, 0.3, 0.1, 0.1, 0.5, 0.4, 0.3, 0.1, 0.6}, {0.1, -0.05, 0.15});
  }
  return StyleTransform::fog(fog_beta, fog_airlight);
}

BenchmarkSpec AwadaConfig::benchmark_spec() const {
  BenchmarkSpec spec;
  spec.n_source = n_source;
  spec.n_target = n_target;
  spec.n_val = n_val;
  spec.style = style_transform();
  return spec;
}

AdamOptions AwadaConfig::gan_adam() const { return {lr_gan, beta1, beta2, 1e-8}; }

void AwadaConfig::set(const std::string& key, const std::string& value) {
  find_entry(key).set(*this, key, trim(value));
}

std::string AwadaConfig::get(const std::string& key) const { return find_entry(key).get(*this); }

const std::vector<std::string>& AwadaConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : table()) out.emplace_back(e.key);
    return out;
  }();
  return names;
}

std::string AwadaConfig::to_text() const {
  std::string out;
  for (const auto& e : table()) out += std::string(e.key) + " = " + e.get(*this) + "\n";
  return out;
}

void AwadaConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::uint64_t AwadaConfig::hash(Scope scope) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& e : table()) {
    if (!in_scope(e.group, scope)) continue;
    for (unsigned char ch : std::string(e.key) + "=" + e.get(*this) + "\n") {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace awada
