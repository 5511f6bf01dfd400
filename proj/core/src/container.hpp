#pragma once

// Binary container shared by the VITW (weights) and VITF (features, probes)
// formats. Layout, all integers little-endian:
//
//   magic[4] | version u32 | header_len u64 | manifest (UTF-8 JSON, header_len bytes) | payload
//
// The manifest lists every tensor as {name, dtype, shape, offset, length};
// offsets are relative to the payload start, ascending and contiguous.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "vitprobe/tensor.hpp"

namespace vitprobe::detail {

inline constexpr std::uint32_t kContainerVersion = 1;

enum class DType { F32, F64, I32 };

std::string_view dtype_name(DType t) noexcept;
std::size_t dtype_size(DType t) noexcept;

struct Blob {
  std::string name;
  DType dtype = DType::F32;
  Shape shape;
  std::vector<unsigned char> bytes;
};

Blob make_blob(std::string name, Shape shape, std::span<const float> values);
Blob make_blob(std::string name, Shape shape, std::span<const double> values);
Blob make_blob(std::string name, Shape shape, std::span<const std::int32_t> values);

std::vector<float> blob_f32(const Blob& b);
std::vector<double> blob_f64(const Blob& b);
std::vector<std::int32_t> blob_i32(const Blob& b);

struct Container {
  std::string magic;  // exactly 4 characters
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<Blob> blobs;

  const Blob& find(std::string_view name) const;
  bool contains(std::string_view name) const;
};

std::vector<unsigned char> encode_container(const Container& c);
Container decode_container(std::span<const unsigned char> bytes, std::string_view expected_magic,
                           const std::string& origin);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path, std::string_view expected_magic);

}  // namespace vitprobe::detail
