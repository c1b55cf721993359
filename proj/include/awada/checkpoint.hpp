#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "awada/adam.hpp"
#include "awada/tensor.hpp"

namespace awada {

/// Named parameter blocks and integer state of one training stage.
///
/// On disk: "AWCK", u32 version, stage tag, u64 config hash, the f64 blocks
/// and u64 integers (each length-prefixed and named), then a CRC32 of all
/// preceding bytes. Every number is little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string stage;
  std::uint64_t config_hash = 0;
  std::map<std::string, std::vector<double>> blocks;
  std::map<std::string, std::uint64_t> ints;

  const std::vector<double>& block(const std::string& name) const;
  std::uint64_t integer(const std::string& name) const;

  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
/// Throws naming the file on bad magic, unknown version, truncation or a
/// checksum mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Refuses a checkpoint written under a different configuration unless forced.
void check_config_hash(const Checkpoint& ck, std::uint64_t expected, bool force);

/// Parameters are stored under "<prefix>/<tensor name>".
void store_parameters(Checkpoint& ck, const std::string& prefix, const std::vector<Tensor>& params);
void restore_parameters(const Checkpoint& ck, const std::string& prefix, std::vector<Tensor> params);

void store_optimizer(Checkpoint& ck, const std::string& prefix, Adam& adam);
void restore_optimizer(const Checkpoint& ck, const std::string& prefix, Adam& adam);

}  // namespace awada
