// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "scenefuse/container.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "scenefuse/error.hpp"

namespace scenefuse {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

const std::string& Bundle::get(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("missing metadata key '" + key + "'");
  return it->second;
}

const ArrayData& Bundle::array(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw FormatError("missing array '" + name + "'");
  return it->second;
}

std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (bytes > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    bytes -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw FormatError("cannot format number");
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw FormatError("bad number '" + std::string(s) + "'");
  return v;
}

std::string format_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

std::vector<double> parse_doubles(std::string_view s) {
  std::vector<double> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.push_back(parse_double(s.substr(i, j - i)));
    i = j;
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::size_t dtype_bytes(Dtype d) { return d == Dtype::f32 ? 4 : 8; }
const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool valid_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == '=' || c == '\n' || c == '\r' || c == ' ' || c == '\t' || c == '#') return false;
  return true;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw FormatError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw FormatError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

void write_bundle(const Bundle& bundle, const std::filesystem::path& dir, std::string_view kind) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format = " << kind << "\n";
  manifest << "version = " << kContainerVersion << "\n";
  for (const auto& [k, v] : bundle.meta) {
    if (!valid_token(k) || v.find('\n') != std::string::npos || v.find('\r') != std::string::npos) {
      throw FormatError("metadata entry '" + k + "' cannot be stored");
    }
    manifest << "meta." << k << " = " << v << "\n";
  }
  for (const auto& [name, a] : bundle.arrays) {
    if (!valid_token(name)) throw FormatError("array name '" + name + "' cannot be stored");
    if (a.rows < 0 || a.cols < 1 || a.values.size() != static_cast<std::size_t>(a.rows) * a.cols) {
      throw FormatError("array '" + name + "' has inconsistent shape");
    }
    std::string bytes(a.values.size() * dtype_bytes(a.dtype), '\0');
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (a.dtype == Dtype::f32) {
        const float f = static_cast<float>(a.values[i]);
        if (static_cast<double>(f) != a.values[i] && !(std::isnan(f) && std::isnan(a.values[i]))) {
          throw FormatError("array '" + name + "' holds a value not representable as f32");
        }
        std::memcpy(bytes.data() + 4 * i, &f, 4);
      } else {
        std::memcpy(bytes.data() + 8 * i, &a.values[i], 8);
      }
    }
    const std::string file = name + ".bin";
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("cannot write '" + (dir / file).string() + "'");
    char crc[16];
    std::snprintf(crc, sizeof crc, "%08x", crc32_of(bytes.data(), bytes.size()));
    manifest << "array." << name << " = " << file << " " << dtype_name(a.dtype) << " " << a.rows << "x" << a.cols
             << " crc32:" << crc << "\n";
  }
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  out << manifest.str();
  if (!out) throw FormatError("cannot write manifest in '" + dir.string() + "'");
}

Bundle read_bundle(const std::filesystem::path& dir, std::string_view kind) {
  const std::filesystem::path manifest_path = dir / "manifest.txt";
  const auto entries = parse_key_values(read_file(manifest_path), manifest_path.string());
  std::map<std::string, std::string> kv(entries.begin(), entries.end());
  if (!kv.count("version")) throw VersionError(manifest_path.string() + ": missing version");
  if (kv["version"] != std::to_string(kContainerVersion)) {
    throw VersionError(manifest_path.string() + ": version " + kv["version"] + " is not supported (expected " +
                       std::to_string(kContainerVersion) + ")");
  }
  if (kv["format"] != kind) {
    throw FormatError(manifest_path.string() + ": format '" + kv["format"] + "', expected '" + std::string(kind) + "'");
  }
  Bundle b;
  for (const auto& [key, value] : entries) {
    if (key.rfind("meta.", 0) == 0) {
      b.meta[key.substr(5)] = value;
    } else if (key.rfind("array.", 0) == 0) {
      const std::string name = key.substr(6);
      std::istringstream ss(value);
      std::string file, dtype, shape, crc;
      if (!(ss >> file >> dtype >> shape >> crc) || crc.rfind("crc32:", 0) != 0 || crc.size() != 14) {
        throw FormatError(manifest_path.string() + ": malformed entry for array '" + name + "'");
      }
      if (file.find('/') != std::string::npos || file.find("..") != std::string::npos) {
        throw FormatError(manifest_path.string() + ": array file '" + file + "' escapes the container");
      }
      ArrayData a;
      if (dtype == "f32") {
        a.dtype = Dtype::f32;
      } else if (dtype == "f64") {
        a.dtype = Dtype::f64;
      } else {
        throw FormatError(manifest_path.string() + ": unknown dtype '" + dtype + "'");
      }
      const std::size_t x = shape.find('x');
      try {
        if (x == std::string::npos) throw std::invalid_argument("shape");
        std::size_t used = 0;
        a.rows = std::stoi(shape.substr(0, x), &used);
        if (used != x) throw std::invalid_argument("shape");
        a.cols = std::stoi(shape.substr(x + 1), &used);
        if (used != shape.size() - x - 1) throw std::invalid_argument("shape");
      } catch (const std::exception&) {
        throw FormatError(manifest_path.string() + ": bad shape '" + shape + "' for array '" + name + "'");
      }
      if (a.rows < 0 || a.cols < 1) throw FormatError(manifest_path.string() + ": bad shape for array '" + name + "'");
      const std::string bytes = read_file(dir / file);
      const std::size_t row_bytes = dtype_bytes(a.dtype) * static_cast<std::size_t>(a.cols);
      if (bytes.size() % row_bytes != 0) {
        throw TruncatedArrayError(file + ": " + std::to_string(bytes.size()) + " bytes is not a whole number of " +
                                  std::to_string(row_bytes) + "-byte rows");
      }
      const std::size_t rows = bytes.size() / row_bytes;
      if (rows != static_cast<std::size_t>(a.rows)) {
        throw ShapeMismatchError(file + ": manifest declares " + std::to_string(a.rows) + " rows, file holds " +
                                 std::to_string(rows));
      }
      char expect[16];
      std::snprintf(expect, sizeof expect, "%08x", crc32_of(bytes.data(), bytes.size()));
      if (crc.substr(6) != expect) throw ChecksumError(file, "expected " + crc.substr(6) + ", computed " + expect);
      a.values.resize(rows * static_cast<std::size_t>(a.cols));
      for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (a.dtype == Dtype::f32) {
          float f;
          std::memcpy(&f, bytes.data() + 4 * i, 4);
          a.values[i] = f;
        } else {
          std::memcpy(&a.values[i], bytes.data() + 8 * i, 8);
        }
      }
      b.arrays.emplace(name, std::move(a));
    } else if (key != "format" && key != "version") {
      throw FormatError(manifest_path.string() + ": unknown manifest key '" + key + "'");
    }
  }
  return b;
}

}  // namespace scenefuse
