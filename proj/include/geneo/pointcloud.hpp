// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "geneo/error.hpp"

namespace geneo {

using Label = std::uint8_t;

/// Class identifiers emitted by the synthetic generator.
inline constexpr Label kGroundLabel = 0;
inline constexpr Label kTowerLabel = 1;
inline constexpr Label kPowerLineLabel = 2;
inline constexpr Label kVegetationLabel = 3;

/// Point coordinates in meters, stored as (x, y, z).
using Point3f = std::array<float, 3>;

/// Labeled point cloud; points and labels are parallel arrays.
struct PointCloud {
  std::vector<Point3f> points;
  std::vector<Label> labels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void push_back(const Point3f& p, Label label) {
    points.push_back(p);
    labels.push_back(label);
  }

  void reserve(std::size_t n) {
    points.reserve(n);
    labels.reserve(n);
  }

  void validate() const {
    if (points.size() != labels.size()) {
      throw ShapeError("point cloud has " + std::to_string(points.size()) + " points but " +
                       std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (float c : points[i]) {
        if (!std::isfinite(c)) {
          throw IoError("point " + std::to_string(i) + " has a non-finite coordinate");
        }
      }
    }
  }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

enum class CloudFormat { Text, Binary };

inline CloudFormat parse_cloud_format(std::string_view tag) {
  if (tag == "text" || tag == "txt") return CloudFormat::Text;
  if (tag == "binary" || tag == "bin" || tag == "gpc") return CloudFormat::Binary;
  throw IoError("unknown point cloud format '" + std::string(tag) + "'");
}

/// `.gpc` files are binary, anything else is read as text.
inline CloudFormat cloud_format_for(const std::filesystem::path& path) {
  return path.extension() == ".gpc" ? CloudFormat::Binary : CloudFormat::Text;
}

inline constexpr char kBinaryMagic[4] = {'G', 'P', 'C', '1'};
inline constexpr std::size_t kBinaryRecordBytes = 3 * sizeof(float) + 1;

namespace detail {

inline void put_le32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline std::uint32_t get_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

}  // namespace detail

/// Parses the whitespace separated `x y z label` text format.
inline PointCloud parse_text_cloud(std::string_view text) {
  PointCloud cloud;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    std::size_t i = 0;
    while (i < line.size() && detail::is_space(line[i])) ++i;
    if (i == line.size() || line[i] == '#') continue;

    std::array<std::string_view, 5> tokens;
    std::size_t n = 0;
    while (i < line.size()) {
      std::size_t j = i;
      while (j < line.size() && !detail::is_space(line[j])) ++j;
      if (n < tokens.size()) tokens[n] = line.substr(i, j - i);
      ++n;
      i = j;
      while (i < line.size() && detail::is_space(line[i])) ++i;
    }
    const auto fail = [&](const std::string& why) {
      return IoError("line " + std::to_string(line_no) + ": " + why);
    };
    if (n != 4) throw fail("expected 4 fields `x y z label`, found " + std::to_string(n));

    Point3f p{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto tok = tokens[k];
      float v = 0.0f;
      const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || end != tok.data() + tok.size()) {
        throw fail("malformed coordinate '" + std::string(tok) + "'");
      }
      if (!std::isfinite(v)) throw fail("non-finite coordinate");
      p[k] = v;
    }
    unsigned label = 0;
    const auto tok = tokens[3];
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), label);
    if (ec != std::errc() || end != tok.data() + tok.size() || label > 255) {
      throw fail("malformed label '" + std::string(tok) + "'");
    }
    cloud.push_back(p, static_cast<Label>(label));
  }
  return cloud;
}

inline std::string format_text_cloud(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 40);
  char buf[128];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const int n = std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %u\n", p[0], p[1], p[2],
                                static_cast<unsigned>(cloud.labels[i]));
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

/// Decodes `GPC1` followed by little-endian (3 x float32, uint8) records.
inline PointCloud parse_binary_cloud(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kBinaryMagic, 4) != 0) {
    throw IoError("offset 0: missing GPC1 magic");
  }
  const std::size_t payload = bytes.size() - 4;
  if (payload % kBinaryRecordBytes != 0) {
    const std::size_t full = payload / kBinaryRecordBytes;
    throw IoError("offset " + std::to_string(4 + full * kBinaryRecordBytes) +
                  ": truncated record");
  }
  const std::size_t n = payload / kBinaryRecordBytes;
  PointCloud cloud;
  cloud.reserve(n);
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + 4;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = base + i * kBinaryRecordBytes;
    Point3f p{};
    for (std::size_t k = 0; k < 3; ++k) {
      p[k] = std::bit_cast<float>(detail::get_le32(rec + 4 * k));
      if (!std::isfinite(p[k])) {
        throw IoError("offset " + std::to_string(4 + i * kBinaryRecordBytes + 4 * k) +
                      ": non-finite coordinate");
      }
    }
    cloud.push_back(p, rec[12]);
  }
  return cloud;
}

inline std::string format_binary_cloud(const PointCloud& cloud) {
  std::string out(kBinaryMagic, 4);
  out.reserve(4 + cloud.size() * kBinaryRecordBytes);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (float c : cloud.points[i]) detail::put_le32(out, std::bit_cast<std::uint32_t>(c));
    out.push_back(static_cast<char>(cloud.labels[i]));
  }
  return out;
}

inline PointCloud load_pointcloud(const std::filesystem::path& path, CloudFormat format) {
  const std::string bytes = detail::read_file(path);
  try {
    return format == CloudFormat::Text ? parse_text_cloud(bytes) : parse_binary_cloud(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline PointCloud load_pointcloud(const std::filesystem::path& path) {
  return load_pointcloud(path, cloud_format_for(path));
}

inline void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path,
                            CloudFormat format) {
  cloud.validate();
  detail::write_file(path, format == CloudFormat::Text ? format_text_cloud(cloud)
                                                       : format_binary_cloud(cloud));
}

inline void save_pointcloud(const PointCloud& cloud, const std::filesystem::path& path) {
  save_pointcloud(cloud, path, cloud_format_for(path));
}

/// Keeps the points whose horizontal (xy) distance to `center` is at most `radius`.
inline PointCloud crop_around_point(const PointCloud& cloud, const std::array<double, 3>& center,
                                    double radius) {
  if (!(radius > 0.0)) throw ConfigError("crop radius must be positive");
  const double r2 = radius * radius;
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double dx = static_cast<double>(cloud.points[i][0]) - center[0];
    const double dy = static_cast<double>(cloud.points[i][1]) - center[1];
    if (dx * dx + dy * dy <= r2) out.push_back(cloud.points[i], cloud.labels[i]);
  }
  return out;
}

}  // namespace geneo
