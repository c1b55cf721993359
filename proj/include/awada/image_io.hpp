#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace awada {

/// 8-bit interleaved image (1 or 3 channels), row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c), pixels(std::size_t(w) * h * c, 0) {}

  std::uint8_t& at(int x, int y, int c) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(std::size_t(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

void write_png(const std::filesystem::path& path, const Image& image);
/// Throws std::runtime_error naming the file on any failure.
Image read_png(const std::filesystem::path& path, int expected_channels);

/// CRC-32 (zlib polynomial).
std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);
std::uint32_t crc32_of_file(const std::filesystem::path& path);
std::string hex32(std::uint32_t v);
std::string hex64(std::uint64_t v);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// SHA-1 of "blob <len>\0<bytes>", the object id git assigns to a file.
std::string git_blob_hash(std::span<const std::uint8_t> bytes);

}  // namespace awada
