#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rvseg/data.hpp"

namespace rvseg::ckpt {

// Single binary container: 8-byte magic ROIGANCK, u32 format version, then a
// length-prefixed table of named entries (name, dtype tag, shape, raw
// little-endian payload). Parameters, optimizer state and RNG blobs all use
// the same encoding.
enum class Tag : std::uint8_t { f32 = 0, f64 = 1, u8 = 2, u64 = 3, i64 = 4 };

struct Entry {
  std::string name;
  Tag tag = Tag::u8;
  std::vector<std::uint32_t> shape;
  std::string payload;

  std::size_t payload_count() const;
};

Entry make_f32(const std::string& name, std::span<const float> values,
               std::vector<std::uint32_t> shape);
Entry make_f64(const std::string& name, std::span<const double> values);
Entry make_u64(const std::string& name, std::uint64_t value);
Entry make_i64(const std::string& name, std::int64_t value);
Entry make_bytes(const std::string& name, const std::string& bytes);

std::vector<float> as_f32(const Entry& e);
double as_f64_scalar(const Entry& e);
std::uint64_t as_u64_scalar(const Entry& e);
std::int64_t as_i64_scalar(const Entry& e);

void write_file(const std::filesystem::path& path, const std::vector<Entry>& entries);
std::vector<Entry> read_file(const std::filesystem::path& path);

}  // namespace rvseg::ckpt
