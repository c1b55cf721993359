#include "awada/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "awada/image_io.hpp"

namespace awada {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string file) : data_(data), file_(std::move(file)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw std::runtime_error("checkpoint " + file_ + " is truncated");
  }
  std::uint64_t le(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(data_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::string file_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::vector<double>& Checkpoint::block(const std::string& name) const {
  auto it = blocks.find(name);
  if (it == blocks.end()) throw std::runtime_error("checkpoint (" + stage + ") has no block '" + name + "'");
  return it->second;
}

std::uint64_t Checkpoint::integer(const std::string& name) const {
  auto it = ints.find(name);
  if (it == ints.end()) throw std::runtime_error("checkpoint (" + stage + ") has no value '" + name + "'");
  return it->second;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  Writer w;
  w.bytes = {'A', 'W', 'C', 'K'};
  w.u32(Checkpoint::kVersion);
  w.str(ck.stage);
  w.u64(ck.config_hash);
  w.u64(ck.blocks.size());
  for (const auto& [name, values] : ck.blocks) {
    w.str(name);
    w.u64(values.size());
    for (double v : values) w.f64(v);
  }
  w.u64(ck.ints.size());
  for (const auto& [name, v] : ck.ints) {
    w.str(name);
    w.u64(v);
  }
  w.u32(crc32_of(w.bytes));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  write_file_bytes(tmp, w.bytes);
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string file = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "AWCK", 4) != 0) {
    throw std::runtime_error("checkpoint " + file + " has bad magic bytes");
  }
  const std::span<const std::uint8_t> body(bytes.data(), bytes.size() - 4);
  Reader tail(std::span<const std::uint8_t>(bytes.data() + bytes.size() - 4, 4), file);
  if (tail.u32() != crc32_of(body)) throw std::runtime_error("checkpoint " + file + " checksum mismatch");

  Reader r(body.subspan(4), file);
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("checkpoint " + file + " has unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.stage = r.str();
  ck.config_hash = r.u64();
  const std::uint64_t nblocks = r.u64();
  for (std::uint64_t b = 0; b < nblocks; ++b) {
    std::string name = r.str();
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 8) throw std::runtime_error("checkpoint " + file + " is truncated");
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    ck.blocks.emplace(std::move(name), std::move(values));
  }
  const std::uint64_t nints = r.u64();
  for (std::uint64_t i = 0; i < nints; ++i) {
    std::string name = r.str();
    ck.ints.emplace(std::move(name), r.u64());
  }
  if (r.remaining() != 0) throw std::runtime_error("checkpoint " + file + " has trailing bytes");
  return ck;
}

void check_config_hash(const Checkpoint& ck, std::uint64_t expected, bool force) {
  if (ck.config_hash != expected && !force) {
    throw std::runtime_error("checkpoint (" + ck.stage + ") was written with config " +
                             hex64(ck.config_hash) + " but the current config is " + hex64(expected) +
                             "; pass --force to load anyway");
  }
}

void store_parameters(Checkpoint& ck, const std::string& prefix, const std::vector<Tensor>& params) {
  for (const auto& p : params) {
    const auto v = p.values();
    ck.blocks[prefix + "/" + p.name()] = std::vector<double>(v.begin(), v.end());
  }
}

void restore_parameters(const Checkpoint& ck, const std::string& prefix, std::vector<Tensor> params) {
  for (auto& p : params) {
    const auto& src = ck.block(prefix + "/" + p.name());
    auto dst = p.mutable_values();
    if (src.size() != dst.size()) {
      throw std::runtime_error("checkpoint block '" + prefix + "/" + p.name() + "' holds " +
                               std::to_string(src.size()) + " values, parameter has " +
                               std::to_string(dst.size()));
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void store_optimizer(Checkpoint& ck, const std::string& prefix, Adam& adam) {
  ck.ints[prefix + "/steps"] = static_cast<std::uint64_t>(adam.step_count());
  for (std::size_t i = 0; i < adam.params().size(); ++i) {
    const std::string base = prefix + "/" + adam.params()[i].name();
    ck.blocks[base + "/m"] = adam.first_moment(i);
    ck.blocks[base + "/v"] = adam.second_moment(i);
  }
}

void restore_optimizer(const Checkpoint& ck, const std::string& prefix, Adam& adam) {
  adam.set_step_count(static_cast<std::int64_t>(ck.integer(prefix + "/steps")));
  for (std::size_t i = 0; i < adam.params().size(); ++i) {
    const std::string base = prefix + "/" + adam.params()[i].name();
    const auto& m = ck.block(base + "/m");
    const auto& v = ck.block(base + "/v");
    if (m.size() != adam.first_moment(i).size() || v.size() != adam.second_moment(i).size()) {
      throw std::runtime_error("checkpoint optimizer state for '" + base + "' has the wrong size");
    }
    adam.first_moment(i) = m;
    adam.second_moment(i) = v;
  }
}

}  // namespace awada
