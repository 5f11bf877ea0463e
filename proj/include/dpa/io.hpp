// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpa/error.hpp"

namespace dpa {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// Reals in line-delimited records use 17 significant digits, which
/// round-trips every finite double through strtod.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string json_string(std::string_view s) { return Json(std::string(s)).dump(); }

inline std::string json_real_array(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_real(values[i]);
  }
  out += ']';
  return out;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string file_checksum(const fs::path& path) {
  std::ostringstream ss;
  ss << "fnv1a64:" << std::hex << std::setw(16) << std::setfill('0')
     << fnv1a64(read_file(path));
  return ss.str();
}

inline Json parse_json_line(std::string_view line, const fs::path& path, std::size_t lineno) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

namespace detail {

struct LineContext {
  const fs::path& path;
  std::size_t lineno;

  [[noreturn]] void fail(const std::string& msg) const {
    throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + msg);
  }
};

template <class T>
T require(const Json& obj, const char* key, const LineContext& ctx) {
  if (!obj.is_object() || !obj.contains(key)) ctx.fail(std::string("missing field \"") + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    ctx.fail(std::string("field \"") + key + "\" has the wrong type");
  }
}

}  // namespace detail

/// Line-delimited JSON sink.
class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
  }

  void write_line(std::string_view line) {
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.put('\n');
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

}  // namespace dpa
