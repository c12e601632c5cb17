// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Directory container shared by scenes and checkpoints: a manifest.txt of
// `key = value` lines plus one little-endian binary file per array, each
// with a CRC-32 recorded in the manifest.
//
//   format = <kind>
//   version = 1
//   meta.<key> = <value>
//   array.<name> = <file> <f32|f64> <rows>x<cols> crc32:<8 hex digits>
namespace scenefuse {

enum class Dtype { f32, f64 };

struct ArrayData {
  Dtype dtype = Dtype::f32;
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major, rows * cols

  bool operator==(const ArrayData&) const = default;
};

struct Bundle {
  std::map<std::string, std::string> meta;
  std::map<std::string, ArrayData> arrays;

  const std::string& get(const std::string& key) const;
  const ArrayData& array(const std::string& name) const;
  bool operator==(const Bundle&) const = default;
};

inline constexpr int kContainerVersion = 1;

/// Writes `dir`/manifest.txt and one .bin per array, creating `dir`. f32
/// arrays must hold values exactly representable as float.
void write_bundle(const Bundle& bundle, const std::filesystem::path& dir, std::string_view kind);

/// Reads and verifies a bundle. Throws VersionError, TruncatedArrayError
/// (payload not a whole number of rows), ShapeMismatchError (row count
/// differs from the manifest), ChecksumError (naming the file) or
/// FormatError for anything else malformed.
Bundle read_bundle(const std::filesystem::path& dir, std::string_view kind);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
std::string format_doubles(const std::vector<double>& v);
std::vector<double> parse_doubles(std::string_view s);

/// Reads `key = value` lines, skipping blanks and '#' comments. Throws
/// FormatError on malformed or duplicate keys.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text, const std::string& source);

std::uint32_t crc32_of(const void* data, std::size_t bytes);

}  // namespace scenefuse
