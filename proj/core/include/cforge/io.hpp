#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace cforge::io {

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling, then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// "2026-10-16T09:30:00Z"
std::string utc_timestamp();
/// "20261016T093000Z", safe for directory names.
std::string compact_timestamp();

}  // namespace cforge::io
