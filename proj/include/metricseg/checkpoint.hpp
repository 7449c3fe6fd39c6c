#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/model.hpp"

namespace metricseg {

// Checkpoint layout (all integers and reals little-endian):
//
//   "MSEGCKPT1"                       9-byte magic, last byte is the version
//   u32 flags                         bit 0: separate_semantic_net
//   u32 block_count
//   block_count x (u32 rows, u32 cols)
//   parameters                        f64, column-major, block by block
//   ADAM first moments                same shapes
//   ADAM second moments               same shapes
//   u64 step
//   u64 seed
inline constexpr std::string_view kCheckpointMagic = "MSEGCKPT1";

namespace detail {

class ByteWriter {
 public:
  void raw(std::string_view s) { buf_.append(s); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  std::string_view raw(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("checkpoint corrupt at byte offset " + std::to_string(pos_) + ": " + what);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const ModelState& s) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(s.config.separate_semantic_net ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(s.params.size()));
  for (const auto& p : s.params) {
    w.u32(static_cast<std::uint32_t>(p.rows()));
    w.u32(static_cast<std::uint32_t>(p.cols()));
  }
  for (const auto* blocks : {&s.params, &s.adam_m, &s.adam_v}) {
    for (const auto& p : *blocks) {
      for (Eigen::Index i = 0; i < p.size(); ++i) w.f64(p.data()[i]);
    }
  }
  w.u64(s.step);
  w.u64(s.seed);
  return w.str();
}

inline ModelState deserialize_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes);
  const std::string_view prefix = kCheckpointMagic.substr(0, kCheckpointMagic.size() - 1);
  const std::string_view magic = r.raw(kCheckpointMagic.size(), "magic");
  if (magic.substr(0, prefix.size()) != prefix) throw ValidationError("not a checkpoint file (bad magic)");
  if (magic != kCheckpointMagic) {
    throw ValidationError("unsupported checkpoint version '" + std::string(1, magic.back()) + "'");
  }
  const std::uint32_t flags = r.u32("flags");
  if (flags > 1) r.fail("unknown flags");
  const std::uint32_t count = r.u32("block count");
  const std::uint32_t trunks = flags ? 2 : 1;
  if (count < 2 * trunks + 4 || (count - 4) % (2 * trunks) != 0) r.fail("block count inconsistent with layout");

  std::vector<std::pair<int, int>> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rows = r.u32("block rows");
    const std::uint32_t cols = r.u32("block cols");
    if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) r.fail("implausible block shape");
    shapes.emplace_back(static_cast<int>(rows), static_cast<int>(cols));
  }

  ModelConfig config;
  config.separate_semantic_net = flags != 0;
  const std::uint32_t depth = (count - 4) / (2 * trunks);
  config.input_width = shapes[0].second;
  config.hidden_widths.clear();
  for (std::uint32_t l = 0; l < depth; ++l) config.hidden_widths.push_back(shapes[2 * l].first);
  config.embed_dim = shapes[count - 4].first;
  config.num_classes = shapes[count - 2].first;
  if (parameter_shapes(config) != shapes) r.fail("block shapes do not describe a valid model");

  ModelState s;
  s.config = config;
  for (auto* blocks : {&s.params, &s.adam_m, &s.adam_v}) {
    for (const auto& [rows, cols] : shapes) {
      Eigen::MatrixXd p(rows, cols);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = r.f64("parameter data");
      blocks->push_back(std::move(p));
    }
  }
  s.step = r.u64("step");
  s.seed = r.u64("seed");
  if (!r.at_end()) r.fail("trailing bytes");
  return s;
}

inline void save_checkpoint(const ModelState& s, const std::string& path) {
  const std::string bytes = serialize_checkpoint(s);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace metricseg
