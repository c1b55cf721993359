#include "awada/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "awada/rng.hpp"

namespace fs = std::filesystem;

namespace awada {

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

bool overlaps(const Box& a, const Box& b, int margin) {
  return a.x1 < b.x2 + margin && b.x1 < a.x2 + margin && a.y1 < b.y2 + margin &&
         b.y1 < a.y2 + margin;
}

Sample make_scene(const SceneSpec& spec, std::uint64_t seed, std::string id) {
  Rng rng(seed);
  Sample s;
  s.id = std::move(id);
  s.image = Image(spec.width, spec.height, 3);
  s.mask = Image(spec.width, spec.height, 1);

  std::array<double, 3> c0{}, c1{};
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.2, 0.55);
    c1[c] = rng.uniform(0.2, 0.55);
  }
  const double mix = rng.uniform();
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double t = mix * x / std::max(1, spec.width - 1) +
                       (1.0 - mix) * y / std::max(1, spec.height - 1);
      for (int c = 0; c < 3; ++c) {
        const double v = c0[c] + (c1[c] - c0[c]) * t + rng.uniform(-spec.noise, spec.noise);
        s.image.at(x, y, c) = quantize(v);
      }
    }
  }

  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const int w = rng.uniform_int(spec.min_size, spec.max_size);
      const int h = rng.uniform_int(spec.min_size, spec.max_size);
      const int x = rng.uniform_int(0, spec.width - w);
      const int y = rng.uniform_int(0, spec.height - h);
      const Box box{double(x), double(y), double(x + w), double(y + h)};
      bool clash = false;
      for (const auto& other : s.boxes) clash = clash || overlaps(box, other, 1);
      if (clash) continue;

      std::array<double, 3> color{};
      const int dominant = rng.uniform_int(0, 2);
      for (int c = 0; c < 3; ++c) {
        color[c] = c == dominant ? rng.uniform(0.75, 1.0) : rng.uniform(0.0, 0.3);
      }
      for (int yy = y; yy < y + h; ++yy) {
        for (int xx = x; xx < x + w; ++xx) {
          for (int c = 0; c < 3; ++c) s.image.at(xx, yy, c) = quantize(color[c]);
          s.mask.at(xx, yy, 0) = 1;
        }
      }
      s.boxes.push_back(box);
      break;
    }
  }
  return s;
}

std::vector<Box> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing label file " + path.string());
  std::vector<Box> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long x1, y1, x2, y2;
    if (!(ls >> x1 >> y1 >> x2 >> y2)) {
      throw std::runtime_error("malformed label line " + std::to_string(lineno) + " in " +
                               path.string());
    }
    boxes.push_back({double(x1), double(y1), double(x2), double(y2)});
  }
  return boxes;
}

std::string labels_text(const std::vector<Box>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    out += std::to_string(std::lround(b.x1)) + ' ' + std::to_string(std::lround(b.y1)) + ' ' +
           std::to_string(std::lround(b.x2)) + ' ' + std::to_string(std::lround(b.y2)) + '\n';
  }
  return out;
}

}  // namespace

void SceneSpec::validate() const {
  if (width < 8 || height < 8) throw std::invalid_argument("scene must be at least 8x8");
  if (min_objects < 1 || max_objects < min_objects) {
    throw std::invalid_argument("object count range invalid");
  }
  if (min_size < 1 || max_size < min_size) throw std::invalid_argument("object size range invalid");
  if (min_size * min_size < 9) throw std::invalid_argument("objects must cover at least 9 pixels");
  if (max_size > width || max_size > height) {
    throw std::invalid_argument("objects of size " + std::to_string(max_size) +
                                " do not fit a " + std::to_string(width) + "x" +
                                std::to_string(height) + " image");
  }
  if (noise < 0) throw std::invalid_argument("noise amplitude must be non-negative");
}

std::string SceneSpec::hash() const {
  std::ostringstream os;
  os << "scene:" << width << 'x' << height << ':' << min_objects << '-' << max_objects << ':'
     << min_size << '-' << max_size << ':' << noise;
  const auto text = os.str();
  return hex32(crc32_of({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()}));
}

StyleTransform StyleTransform::fog(double beta, double airlight) {
  StyleTransform t;
  t.kind = Kind::fog;
  t.beta = beta;
  t.airlight = airlight;
  return t;
}

StyleTransform StyleTransform::colorshift(std::array<double, 9> m, std::array<double, 3> b) {
  StyleTransform t;
  t.kind = Kind::colorshift;
  t.matrix = m;
  t.bias = b;
  return t;
}

std::string StyleTransform::describe() const {
  std::ostringstream os;
  if (kind == Kind::fog) {
    os << "fog(beta=" << beta << ",airlight=" << airlight << ")";
  } else {
    os << "colorshift(";
    for (double v : matrix) os << v << ',';
    os << bias[0] << ',' << bias[1] << ',' << bias[2] << ")";
  }
  return os.str();
}

std::string to_string(Domain d) {
  switch (d) {
    case Domain::source: return "source";
    case Domain::target: return "target";
    case Domain::target_eval: return "target_eval";
    case Domain::stylized_source: return "stylized_source";
  }
  return "?";
}

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  if (s == "target_eval") return Domain::target_eval;
  if (s == "stylized_source") return Domain::stylized_source;
  throw std::invalid_argument("unknown domain '" + s + "'");
}

DomainDataset generate_scenes(int n, const SceneSpec& spec, std::uint64_t seed, SeedStream stream,
                              const std::string& id_prefix) {
  if (n < 1) throw std::invalid_argument("dataset size must be at least 1");
  spec.validate();
  DomainDataset ds;
  ds.domain = Domain::source;
  ds.seed = seed;
  ds.spec_hash = spec.hash();
  ds.samples.resize(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "%s%05d", id_prefix.c_str(), i);
    ds.samples[i] = make_scene(spec, derive_seed(seed, static_cast<std::uint64_t>(stream), i), id);
  }
  return ds;
}

DomainDataset generate_source(int n, const SceneSpec& spec, std::uint64_t seed) {
  return generate_scenes(n, spec, seed, SeedStream::source, "src_");
}

Image apply_style(const Image& image, const StyleTransform& t) {
  Image out = image;
  for (int y = 0; y < image.height; ++y) {
    const double depth = static_cast<double>(image.height - y) / image.height;
    const double trans = std::exp(-t.beta * depth);
    for (int x = 0; x < image.width; ++x) {
      std::array<double, 3> in{};
      for (int c = 0; c < 3; ++c) in[c] = image.at(x, y, c) / 255.0;
      for (int c = 0; c < 3; ++c) {
        double v;
        if (t.kind == StyleTransform::Kind::fog) {
          v = in[c] * trans + t.airlight * (1.0 - trans);
        } else {
          v = t.matrix[3 * c] * in[0] + t.matrix[3 * c + 1] * in[1] + t.matrix[3 * c + 2] * in[2] +
              t.bias[c];
        }
        out.at(x, y, c) = quantize(v);
      }
    }
  }
  return out;
}

DomainDataset apply_style(const DomainDataset& dataset, const StyleTransform& t, Domain domain) {
  DomainDataset out = dataset;
  out.domain = domain;
  const int n = static_cast<int>(out.samples.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out.samples[i].image = apply_style(dataset.samples[i].image, t);
  if (!out.labeled()) {
    for (auto& s : out.samples) {
      s.boxes.clear();
      s.mask = Image();
    }
  }
  return out;
}

Benchmark generate_benchmark(const BenchmarkSpec& spec, std::uint64_t seed) {
  Benchmark b;
  b.source = generate_scenes(spec.n_source, spec.scene, seed, SeedStream::source, "src_");
  b.source_val = generate_scenes(spec.n_val, spec.scene, seed, SeedStream::source_val, "srcval_");
  b.target_labels = apply_style(
      generate_scenes(spec.n_target, spec.scene, seed, SeedStream::target, "tgt_"), spec.style,
      Domain::target_eval);
  b.target = b.target_labels;
  b.target.domain = Domain::target;
  for (auto& s : b.target.samples) {
    s.boxes.clear();
    s.mask = Image();
  }
  b.target_val =
      apply_style(generate_scenes(spec.n_val, spec.scene, seed, SeedStream::target_val, "tgtval_"),
                  spec.style, Domain::target_eval);
  return b;
}

std::vector<Proposal> jittered_proposals(const std::vector<Box>& boxes, double jitter,
                                         double miss_rate, double false_rate, std::uint64_t seed,
                                         int width, int height) {
  if (miss_rate < 0 || miss_rate > 1 || false_rate < 0 || false_rate > 1 || jitter < 0) {
    throw std::invalid_argument("jittered_proposals: rates must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<Proposal> out;
  for (const auto& b : boxes) {
    const bool keep = !rng.bernoulli(miss_rate);
    const double jw = jitter * b.width();
    const double jh = jitter * b.height();
    Box j{b.x1 + rng.uniform(-jw, jw), b.y1 + rng.uniform(-jh, jh), b.x2 + rng.uniform(-jw, jw),
          b.y2 + rng.uniform(-jh, jh)};
    const double conf = rng.uniform(0.5, 1.0);
    j = clip_box(j, width, height);
    if (keep && j.valid()) out.push_back({j, conf});
  }
  const std::size_t slots = std::max<std::size_t>(1, boxes.size());
  for (std::size_t k = 0; k < slots; ++k) {
    const bool add = rng.bernoulli(false_rate);
    const double w = rng.uniform(4.0, 16.0);
    const double h = rng.uniform(4.0, 16.0);
    const double x = rng.uniform(0.0, width - w);
    const double y = rng.uniform(0.0, height - h);
    const double conf = rng.uniform(0.3, 0.7);
    if (add) out.push_back({clip_box({x, y, x + w, y + h}, width, height), conf});
  }
  return out;
}

void write_dataset(const DomainDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  if (dataset.labeled()) {
    fs::create_directories(dir / "labels");
    fs::create_directories(dir / "masks");
  }
  const int n = static_cast<int>(dataset.samples.size());
  std::vector<std::string> rows(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto& s = dataset.samples[i];
    const auto image_path = dir / "images" / (s.id + ".png");
    write_png(image_path, s.image);
    std::string row = s.id + ' ' + hex32(crc32_of_file(image_path));
    if (dataset.labeled()) {
      const auto text = labels_text(s.boxes);
      const auto label_path = dir / "labels" / (s.id + ".txt");
      write_file_bytes(label_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
      Image mask = s.mask;
      for (auto& v : mask.pixels) v = v ? 255 : 0;
      const auto mask_path = dir / "masks" / (s.id + ".png");
      write_png(mask_path, mask);
      row += ' ' + hex32(crc32_of_file(label_path)) + ' ' + hex32(crc32_of_file(mask_path));
    }
    rows[i] = row;
  }
  std::ofstream manifest(dir / "manifest", std::ios::trunc);
  manifest << "awada-dataset 1\n"
           << "domain " << to_string(dataset.domain) << '\n'
           << "seed " << dataset.seed << '\n'
           << "spec_hash " << dataset.spec_hash << '\n'
           << "count " << n << '\n';
  for (const auto& r : rows) manifest << r << '\n';
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir.string());
}

DomainDataset read_dataset(const fs::path& dir) {
  const auto manifest_path = dir / "manifest";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("missing dataset manifest " + manifest_path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "awada-dataset" || version != 1) {
    throw std::runtime_error("unrecognised dataset manifest " + manifest_path.string());
  }
  DomainDataset ds;
  std::string key, domain;
  int count = -1;
  in >> key >> domain;
  ds.domain = domain_from_string(domain);
  in >> key >> ds.seed >> key >> ds.spec_hash >> key >> count;
  if (!in || count < 0) throw std::runtime_error("corrupt manifest header in " + manifest_path.string());
  struct Row {
    std::string id, image_crc, label_crc, mask_crc;
  };
  std::vector<Row> rows(count);
  for (auto& r : rows) {
    in >> r.id >> r.image_crc;
    if (ds.labeled()) in >> r.label_crc >> r.mask_crc;
    if (!in) throw std::runtime_error("truncated manifest " + manifest_path.string());
  }
  ds.samples.resize(count);
  for (int i = 0; i < count; ++i) {
    const auto& r = rows[i];
    auto& s = ds.samples[i];
    s.id = r.id;
    const auto image_path = dir / "images" / (r.id + ".png");
    if (!fs::exists(image_path)) {
      throw std::runtime_error("dataset " + dir.string() + ": image for id '" + r.id +
                               "' is missing (" + image_path.string() + ")");
    }
    if (hex32(crc32_of_file(image_path)) != r.image_crc) {
      throw std::runtime_error("dataset " + dir.string() + ": image checksum mismatch for id '" +
                               r.id + "'");
    }
    s.image = read_png(image_path, 3);
    if (!ds.labeled()) continue;
    const auto label_path = dir / "labels" / (r.id + ".txt");
    if (!fs::exists(label_path)) {
      throw std::runtime_error("dataset " + dir.string() + ": label file for id '" + r.id +
                               "' is missing");
    }
    if (hex32(crc32_of_file(label_path)) != r.label_crc) {
      throw std::runtime_error("dataset " + dir.string() + ": label checksum mismatch for id '" +
                               r.id + "'");
    }
    s.boxes = read_labels(label_path);
    const auto mask_path = dir / "masks" / (r.id + ".png");
    if (!fs::exists(mask_path) || hex32(crc32_of_file(mask_path)) != r.mask_crc) {
      throw std::runtime_error("dataset " + dir.string() + ": mask for id '" + r.id +
                               "' is missing or corrupt");
    }
    s.mask = read_png(mask_path, 1);
    for (auto& v : s.mask.pixels) v = v > 127 ? 1 : 0;
  }
  return ds;
}

}  // namespace awada
