// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace vista::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Collapses every run of whitespace into a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

/// Case-insensitive search for the last occurrence of `needle`; npos if absent.
std::size_t rfind_ci(std::string_view haystack, std::string_view needle);
std::size_t find_ci(std::string_view haystack, std::string_view needle, std::size_t from = 0);

std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

/// 64-bit FNV-1a. Stable across platforms and process restarts.
std::uint64_t fnv1a64(std::string_view s);
std::string hash_hex(std::string_view s);

/// Fixed one-decimal rendering used for scores in prompts, e.g. 96.1.
std::string format_score(double score);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

} // namespace vista::text
