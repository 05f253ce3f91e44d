#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vsrhe {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path` on success, so
// a failed write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace vsrhe
