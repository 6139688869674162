#pragma once

// Output plumbing: round-trip number formatting, RFC-4180 CSV rows, atomic
// file writes and framed little-endian float64 dumps with a JSON sidecar.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlab/errors.hpp"

namespace mvlab::io {

/// Shortest decimal that round-trips; '.' decimal point regardless of locale.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) throw numerical_error("refusing to serialise a non-finite value", v);
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Empty field for an absent value.
inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

/// JSON number, or null for an absent or non-finite value.
inline nlohmann::json json_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_row(std::span<const std::string> fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  line += "\r\n";
  return line;
}

/// Writes to a sibling temporary and renames over the target.
inline void atomic_write(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("rename failed for " + path.string() + ": " + ec.message());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

/// Appends v as 8 little-endian bytes.
inline void append_f64_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.append(b, 8);
}

inline double read_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

/// Row-major float64 records in <stem>.bin, shape/seed/description in
/// <stem>.json. shape = {frames, record_length}.
inline void write_frames(const std::filesystem::path& stem, std::span<const double> data, std::size_t frames,
                         std::size_t record_length, std::uint64_t seed, const nlohmann::json& extra = {}) {
  if (frames * record_length != data.size()) throw validation_error("frame shape does not match data size");
  std::string bytes;
  bytes.reserve(data.size() * 8);
  for (double v : data) append_f64_le(bytes, v);
  auto bin = stem;
  bin += ".bin";
  atomic_write(bin, bytes);
  nlohmann::json side{{"format", "float64-le"},
                      {"shape", {frames, record_length}},
                      {"seed", seed},
                      {"file", bin.filename().string()}};
  if (!extra.is_null()) side["meta"] = extra;
  auto js = stem;
  js += ".json";
  write_json(js, side);
}

struct FrameDump {
  std::size_t frames = 0;
  std::size_t record_length = 0;
  std::uint64_t seed = 0;
  std::vector<double> data;
};

inline FrameDump read_frames(const std::filesystem::path& stem) {
  auto js = stem;
  js += ".json";
  std::ifstream side(js);
  if (!side) throw std::runtime_error("missing sidecar " + js.string());
  const auto meta = nlohmann::json::parse(side);
  FrameDump d;
  d.frames = meta.at("shape").at(0).get<std::size_t>();
  d.record_length = meta.at("shape").at(1).get<std::size_t>();
  d.seed = meta.at("seed").get<std::uint64_t>();
  auto bin = stem;
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() != d.frames * d.record_length * 8) throw std::runtime_error("frame file size mismatch");
  d.data.resize(d.frames * d.record_length);
  for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = read_f64_le(raw.data() + 8 * i);
  return d;
}

}  // namespace mvlab::io
