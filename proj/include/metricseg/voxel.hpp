#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/point_cloud.hpp"

namespace metricseg {

using VoxelCoord = std::array<std::int32_t, 3>;

inline constexpr std::int64_t kVoxelCoordLimit = std::int64_t{1} << 20;

// Packs an integer cell coordinate into 63 bits, 21 bits per axis in
// offset-binary. Injective on [-2^20, 2^20)^3 and order preserving: key order
// equals lexicographic coordinate order.
inline std::uint64_t voxel_key(const VoxelCoord& c) {
  std::uint64_t key = 0;
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t v = c[axis];
    if (v < -kVoxelCoordLimit || v >= kVoxelCoordLimit) {
      throw ValidationError("voxel coordinate " + std::to_string(v) + " on axis " +
                            std::to_string(axis) + " outside [-2^20, 2^20)");
    }
    key = (key << 21) | static_cast<std::uint64_t>(v + kVoxelCoordLimit);
  }
  return key;
}

inline VoxelCoord voxel_coord_from_key(std::uint64_t key) {
  VoxelCoord c{};
  for (int axis = 2; axis >= 0; --axis) {
    c[axis] = static_cast<std::int32_t>(static_cast<std::int64_t>(key & ((1u << 21) - 1)) - kVoxelCoordLimit);
    key >>= 21;
  }
  return c;
}

struct VoxelCell {
  VoxelCoord coord{};
  // Mean of member features: x y z r g b.
  std::array<double, 6> feature{};
  std::optional<int> instance_id;
  std::optional<int> semantic_id;
  std::vector<std::size_t> members;

  Vec3 position() const { return {feature[0], feature[1], feature[2]}; }
  Vec3 color() const { return {feature[3], feature[4], feature[5]}; }
};

class VoxelGrid;
VoxelGrid voxelize(const PointCloud& cloud, double voxel_size);

// Immutable sparse grid. Cells are sorted by coordinate; cell i owns the
// points listed in cells()[i].members and point_to_voxel()[p] names the cell
// of point p.
class VoxelGrid {
 public:
  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return cells_.size(); }
  std::size_t point_count() const { return point_to_voxel_.size(); }
  const std::vector<VoxelCell>& cells() const { return cells_; }
  const VoxelCell& cell(std::size_t i) const { return cells_[i]; }
  const std::vector<std::size_t>& point_to_voxel() const { return point_to_voxel_; }

 private:
  friend VoxelGrid voxelize(const PointCloud& cloud, double voxel_size);
  double voxel_size_ = 0.0;
  std::vector<VoxelCell> cells_;
  std::vector<std::size_t> point_to_voxel_;
};

namespace detail {

// Majority vote over optional labels; an absent label votes as -1. Ties go to
// the lowest value, so absent wins ties against any real id.
inline std::optional<int> majority_label(const std::vector<int>& votes) {
  std::map<int, std::size_t> counts;
  for (int v : votes) ++counts[v];
  int best = -1;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

}  // namespace detail

inline VoxelGrid voxelize(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw ValidationError("voxel size must be positive and finite");
  }
  if (cloud.empty()) throw ValidationError("empty input");

  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud[i].position;
    if (!p.allFinite()) {
      throw ValidationError("point " + std::to_string(i) + ": non-finite coordinate");
    }
    VoxelCoord c{};
    for (int axis = 0; axis < 3; ++axis) {
      const double f = std::floor(p[axis] / voxel_size);
      if (f < -static_cast<double>(kVoxelCoordLimit) || f >= static_cast<double>(kVoxelCoordLimit)) {
        throw ValidationError("point " + std::to_string(i) + ": voxel coordinate out of range");
      }
      c[axis] = static_cast<std::int32_t>(f);
    }
    keyed[i] = {voxel_key(c), i};
  }
  std::sort(keyed.begin(), keyed.end());

  VoxelGrid grid;
  grid.voxel_size_ = voxel_size;
  grid.point_to_voxel_.assign(cloud.size(), 0);
  std::vector<int> inst_votes;
  std::vector<int> sem_votes;
  for (std::size_t b = 0; b < keyed.size();) {
    std::size_t e = b;
    while (e < keyed.size() && keyed[e].first == keyed[b].first) ++e;

    VoxelCell cell;
    cell.coord = voxel_coord_from_key(keyed[b].first);
    cell.members.reserve(e - b);
    inst_votes.clear();
    sem_votes.clear();
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t idx = keyed[k].second;
      const Point& p = cloud[idx];
      for (int c = 0; c < 3; ++c) {
        cell.feature[c] += p.position[c];
        cell.feature[3 + c] += p.color[c];
      }
      inst_votes.push_back(p.instance_id.value_or(-1));
      sem_votes.push_back(p.semantic_id.value_or(-1));
      cell.members.push_back(idx);
      grid.point_to_voxel_[idx] = grid.cells_.size();
    }
    const double inv = 1.0 / static_cast<double>(e - b);
    for (double& f : cell.feature) f *= inv;
    cell.instance_id = detail::majority_label(inst_votes);
    cell.semantic_id = detail::majority_label(sem_votes);
    grid.cells_.push_back(std::move(cell));
    b = e;
  }
  return grid;
}

// Transfers one label per cell back to every point through the stored
// point-to-cell map.
template <typename Label>
std::vector<Label> devoxelize(const VoxelGrid& grid, std::span<const Label> per_voxel) {
  if (per_voxel.size() != grid.size()) {
    throw ValidationError("devoxelize: got " + std::to_string(per_voxel.size()) + " labels for " +
                          std::to_string(grid.size()) + " cells");
  }
  std::vector<Label> out(grid.point_count());
  const auto& map = grid.point_to_voxel();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = per_voxel[map[i]];
  return out;
}

template <typename Label>
std::vector<Label> devoxelize(const VoxelGrid& grid, const std::vector<Label>& per_voxel) {
  return devoxelize(grid, std::span<const Label>(per_voxel));
}

}  // namespace metricseg
