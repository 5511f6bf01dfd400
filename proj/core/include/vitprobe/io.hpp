#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vitprobe {

/// Writes via a sibling temp file and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a 64 of a byte range, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::span<const unsigned char> bytes);

}  // namespace vitprobe
