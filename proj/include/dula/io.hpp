#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace dula::io {

using json = nlohmann::json;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);

/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const json& doc);

/// FNV-1a 64-bit, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace dula::io
