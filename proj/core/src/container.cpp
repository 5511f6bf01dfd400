#include "container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <optional>

#include "vitprobe/io.hpp"

namespace vitprobe::detail {

namespace {

template <class U>
void put_le(std::vector<unsigned char>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(value >> (8 * i)));
}

template <class U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

[[noreturn]] void corrupt(const std::string& origin, const std::string& what) {
  fail(ErrorKind::Corruption, origin + ": " + what);
}

std::optional<DType> parse_dtype(std::string_view s) {
  if (s == "f32") return DType::F32;
  if (s == "f64") return DType::F64;
  if (s == "i32") return DType::I32;
  return std::nullopt;
}

}  // namespace

std::string_view dtype_name(DType t) noexcept {
  switch (t) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::I32: return "i32";
  }
  return "f32";
}

std::size_t dtype_size(DType t) noexcept { return t == DType::F64 ? 8 : 4; }

Blob make_blob(std::string name, Shape shape, std::span<const float> values) {
  Blob b{std::move(name), DType::F32, std::move(shape), {}};
  b.bytes.reserve(values.size() * 4);
  for (float v : values) put_le(b.bytes, std::bit_cast<std::uint32_t>(v));
  return b;
}

Blob make_blob(std::string name, Shape shape, std::span<const double> values) {
  Blob b{std::move(name), DType::F64, std::move(shape), {}};
  b.bytes.reserve(values.size() * 8);
  for (double v : values) put_le(b.bytes, std::bit_cast<std::uint64_t>(v));
  return b;
}

Blob make_blob(std::string name, Shape shape, std::span<const std::int32_t> values) {
  Blob b{std::move(name), DType::I32, std::move(shape), {}};
  b.bytes.reserve(values.size() * 4);
  for (std::int32_t v : values) put_le(b.bytes, static_cast<std::uint32_t>(v));
  return b;
}

std::vector<float> blob_f32(const Blob& b) {
  if (b.dtype != DType::F32) fail(ErrorKind::Corruption, "tensor " + b.name + " is not f32");
  std::vector<float> out(b.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_le<std::uint32_t>(&b.bytes[4 * i]));
  return out;
}

std::vector<double> blob_f64(const Blob& b) {
  if (b.dtype != DType::F64) fail(ErrorKind::Corruption, "tensor " + b.name + " is not f64");
  std::vector<double> out(b.bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(&b.bytes[8 * i]));
  }
  return out;
}

std::vector<std::int32_t> blob_i32(const Blob& b) {
  if (b.dtype != DType::I32) fail(ErrorKind::Corruption, "tensor " + b.name + " is not i32");
  std::vector<std::int32_t> out(b.bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(&b.bytes[4 * i]));
  }
  return out;
}

const Blob& Container::find(std::string_view name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b;
  }
  fail(ErrorKind::Corruption, "container has no tensor named " + std::string(name));
}

bool Container::contains(std::string_view name) const {
  return std::any_of(blobs.begin(), blobs.end(), [&](const Blob& b) { return b.name == name; });
}

std::vector<unsigned char> encode_container(const Container& c) {
  if (c.magic.size() != 4) fail(ErrorKind::Spec, "container magic must be 4 bytes");
  nlohmann::json manifest;
  manifest["metadata"] = c.metadata;
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  std::vector<unsigned char> payload;
  for (const auto& b : c.blobs) {
    if (b.bytes.size() != shape_size(b.shape) * dtype_size(b.dtype)) {
      fail(ErrorKind::Dimension, "tensor " + b.name + " byte length disagrees with shape " + shape_string(b.shape));
    }
    tensors.push_back({{"name", b.name},
                       {"dtype", dtype_name(b.dtype)},
                       {"shape", b.shape},
                       {"offset", offset},
                       {"length", b.bytes.size()}});
    offset += b.bytes.size();
    payload.insert(payload.end(), b.bytes.begin(), b.bytes.end());
  }
  manifest["tensors"] = std::move(tensors);
  manifest["payload_length"] = payload.size();
  manifest["payload_fnv1a64"] = fnv1a_hex(payload);
  const std::string text = manifest.dump();

  std::vector<unsigned char> out;
  out.reserve(16 + text.size() + payload.size());
  out.insert(out.end(), c.magic.begin(), c.magic.end());
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Container decode_container(std::span<const unsigned char> bytes, std::string_view expected_magic,
                           const std::string& origin) {
  if (bytes.size() < 16) corrupt(origin, "file shorter than the fixed header");
  Container c;
  c.magic.assign(bytes.begin(), bytes.begin() + 4);
  if (c.magic != expected_magic) {
    corrupt(origin, "bad magic '" + c.magic + "', expected '" + std::string(expected_magic) + "'");
  }
  const auto version = get_le<std::uint32_t>(&bytes[4]);
  if (version != kContainerVersion) corrupt(origin, "unsupported version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(&bytes[8]);
  if (header_len > bytes.size() - 16) corrupt(origin, "manifest extends past end of file");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(origin, std::string("unparseable manifest: ") + e.what());
  }
  try {
    const auto payload = bytes.subspan(16 + header_len);
    const auto payload_length = manifest.at("payload_length").get<std::uint64_t>();
    if (payload.size() != payload_length) {
      corrupt(origin, "payload is " + std::to_string(payload.size()) + " bytes, manifest says " +
                          std::to_string(payload_length));
    }
    if (fnv1a_hex(payload) != manifest.at("payload_fnv1a64").get<std::string>()) {
      corrupt(origin, "payload checksum mismatch");
    }
    c.metadata = manifest.at("metadata");
    std::uint64_t expected_offset = 0;
    for (const auto& t : manifest.at("tensors")) {
      Blob b;
      b.name = t.at("name").get<std::string>();
      const auto dt = parse_dtype(t.at("dtype").get<std::string>());
      if (!dt) corrupt(origin, "unknown dtype for " + b.name);
      b.dtype = *dt;
      b.shape = t.at("shape").get<Shape>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto length = t.at("length").get<std::uint64_t>();
      if (offset != expected_offset) corrupt(origin, "tensor " + b.name + " offset is not contiguous");
      if (length != shape_size(b.shape) * dtype_size(b.dtype)) {
        corrupt(origin, "tensor " + b.name + " length disagrees with its shape");
      }
      if (offset + length > payload.size()) corrupt(origin, "tensor " + b.name + " extends past payload");
      b.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                     payload.begin() + static_cast<std::ptrdiff_t>(offset + length));
      expected_offset = offset + length;
      c.blobs.push_back(std::move(b));
    }
    if (expected_offset != payload.size()) corrupt(origin, "payload length != sum of tensor lengths");
  } catch (const nlohmann::json::exception& e) {
    corrupt(origin, std::string("malformed manifest: ") + e.what());
  }
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  write_file_atomic(path, encode_container(c));
}

Container read_container(const std::filesystem::path& path, std::string_view expected_magic) {
  const auto bytes = read_file_bytes(path);
  return decode_container(bytes, expected_magic, path.string());
}

}  // namespace vitprobe::detail
