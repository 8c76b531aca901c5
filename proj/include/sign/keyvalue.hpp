#pragma once

// Plain-text configuration: one "key = value" per line, '#' starts a comment,
// blank lines are ignored.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace sign {

using KeyValues = std::map<std::string, std::string>;

// Throws Error(InvalidArgument) naming the line for malformed or duplicate entries.
[[nodiscard]] KeyValues parse_key_values(std::string_view text);
[[nodiscard]] KeyValues load_key_values(const std::filesystem::path& path);
// Sorted by key, one entry per line.
[[nodiscard]] std::string format_key_values(const KeyValues& values);
void save_key_values(const std::filesystem::path& path, const KeyValues& values);

// Strict conversions; the key is used in error messages.
[[nodiscard]] double parse_double(std::string_view key, std::string_view text);
[[nodiscard]] std::uint64_t parse_unsigned(std::string_view key, std::string_view text);
[[nodiscard]] bool parse_bool(std::string_view key, std::string_view text);
// Shortest text that parses back to the same double.
[[nodiscard]] std::string format_double(double value);

}  // namespace sign
