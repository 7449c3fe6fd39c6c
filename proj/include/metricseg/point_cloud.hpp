#pragma once

#include <Eigen/Core>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "metricseg/error.hpp"

namespace metricseg {

using Vec3 = Eigen::Vector3d;

struct Point {
  Vec3 position = Vec3::Zero();  // meters
  Vec3 color = Vec3::Zero();     // RGB in [0,1]
  std::optional<int> instance_id;
  std::optional<int> semantic_id;
};

using PointCloud = std::vector<Point>;

// Throws ValidationError naming the first point that violates the
// container invariants (finite position, color inside the unit cube,
// non-negative ids).
inline void validate_cloud(const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    if (!p.position.allFinite()) {
      throw ValidationError("point " + std::to_string(i) + ": non-finite position");
    }
    if (!p.color.allFinite() || p.color.minCoeff() < 0.0 || p.color.maxCoeff() > 1.0) {
      throw ValidationError("point " + std::to_string(i) + ": color outside [0,1]");
    }
    if ((p.instance_id && *p.instance_id < 0) || (p.semantic_id && *p.semantic_id < 0)) {
      throw ValidationError("point " + std::to_string(i) + ": negative label");
    }
  }
}

// ---------------------------------------------------------------------------
// Text format, version 1:
//
//   metricseg-pc v1 N has_instance has_semantic
//   x y z r g b [inst] [sem]      (N lines)
//
// has_instance / has_semantic are 0 or 1 and say whether the optional
// integer columns are present. An absent label inside a present column is
// written as -1. Reals use the shortest round-trip decimal form, so a
// write/read cycle is bit-exact.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kPointCloudMagic = "metricseg-pc";
inline constexpr std::string_view kPointCloudVersion = "v1";

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

inline std::string_view next_token(std::string_view& line) {
  std::size_t b = line.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    line = {};
    return {};
  }
  std::size_t e = line.find_first_of(" \t\r", b);
  if (e == std::string_view::npos) e = line.size();
  std::string_view tok = line.substr(b, e - b);
  line.remove_prefix(e);
  return tok;
}

template <typename T>
bool parse_number(std::string_view tok, T& out) {
  if (tok.empty()) return false;
  if (tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

}  // namespace detail

inline std::string format_cloud(const PointCloud& cloud, bool with_instance, bool with_semantic) {
  std::string out;
  out.reserve(64 + cloud.size() * 96);
  out += kPointCloudMagic;
  out += ' ';
  out += kPointCloudVersion;
  out += ' ' + std::to_string(cloud.size()) + ' ' + (with_instance ? "1" : "0") + ' ' +
         (with_semantic ? "1" : "0") + '\n';
  for (const Point& p : cloud) {
    for (int c = 0; c < 3; ++c) {
      detail::append_double(out, p.position[c]);
      out += ' ';
    }
    for (int c = 0; c < 3; ++c) {
      detail::append_double(out, p.color[c]);
      if (c < 2) out += ' ';
    }
    if (with_instance) out += ' ' + std::to_string(p.instance_id.value_or(-1));
    if (with_semantic) out += ' ' + std::to_string(p.semantic_id.value_or(-1));
    out += '\n';
  }
  return out;
}

inline PointCloud parse_cloud(std::string_view text, const std::string& origin = "<memory>") {
  auto fail = [&](std::size_t line_no, const std::string& what) -> ValidationError {
    return ValidationError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    line = text.substr(pos, e - pos);
    pos = e + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  if (!next_line(line)) throw fail(1, "missing header");
  if (detail::next_token(line) != kPointCloudMagic) throw fail(1, "bad magic");
  std::string_view version = detail::next_token(line);
  if (version != kPointCloudVersion) {
    throw fail(1, "unsupported version '" + std::string(version) + "'");
  }
  std::size_t n = 0;
  int has_inst = 0;
  int has_sem = 0;
  if (!detail::parse_number(detail::next_token(line), n) ||
      !detail::parse_number(detail::next_token(line), has_inst) ||
      !detail::parse_number(detail::next_token(line), has_sem) || (has_inst != 0 && has_inst != 1) ||
      (has_sem != 0 && has_sem != 1)) {
    throw fail(1, "malformed header");
  }

  PointCloud cloud;
  cloud.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!next_line(line)) throw fail(line_no + 1, "expected " + std::to_string(n) + " points");
    Point p;
    for (int c = 0; c < 6; ++c) {
      double v = 0.0;
      if (!detail::parse_number(detail::next_token(line), v)) throw fail(line_no, "bad real");
      (c < 3 ? p.position[c] : p.color[c - 3]) = v;
    }
    auto read_label = [&](std::optional<int>& dst) {
      int v = 0;
      if (!detail::parse_number(detail::next_token(line), v) || v < -1) {
        throw fail(line_no, "bad label");
      }
      if (v >= 0) dst = v;
    };
    if (has_inst) read_label(p.instance_id);
    if (has_sem) read_label(p.semantic_id);
    if (!detail::next_token(line).empty()) throw fail(line_no, "trailing tokens");
    cloud.push_back(p);
  }
  while (next_line(line)) {
    if (!detail::next_token(line).empty()) throw fail(line_no, "data after last point");
  }
  try {
    validate_cloud(cloud);
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return cloud;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline PointCloud read_cloud(const std::string& path) { return parse_cloud(read_text_file(path), path); }

inline void write_cloud(const std::string& path, const PointCloud& cloud, bool with_instance = true,
                        bool with_semantic = true) {
  write_text_file(path, format_cloud(cloud, with_instance, with_semantic));
}

}  // namespace metricseg
