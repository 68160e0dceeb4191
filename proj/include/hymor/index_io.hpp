#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hymor/centroid_index.hpp"

namespace hymor {

// Binary index layout, all integers little-endian:
//
//   "HYMX" | u32 format_version | u32 dim | u32 class_count
//   | f32[dim] global_mean
//   | per class, sorted by label bytes:
//       u16 label_len | label bytes | u8 category (0 animal, 1 plant)
//       | u32 sample_count | u8 degenerate | f32[dim] raw | f32[dim] processed
//   | u32 CRC32 of every preceding byte
inline constexpr char kIndexMagic[4] = {'H', 'Y', 'M', 'X'};

std::vector<std::uint8_t> serialize_index(const CentroidIndex& index);

// Throws IndexFormatError; never returns a partially parsed index.
CentroidIndex parse_index(std::span<const std::uint8_t> bytes);

void save_index(const CentroidIndex& index, std::ostream& out);
CentroidIndex load_index(std::istream& in);

// Writes through a temporary sibling file and renames it into place.
void save_index(const CentroidIndex& index, const std::filesystem::path& path);
CentroidIndex load_index(const std::filesystem::path& path);

// Reads a JSONL build file ({"label", "category", "embedding"} per line) into a builder.
IndexBuilder read_build_jsonl(std::istream& in);
IndexBuilder read_build_jsonl(const std::filesystem::path& path);

}  // namespace hymor
