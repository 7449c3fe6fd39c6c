#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/voxel.hpp"

namespace metricseg {

// Second-moment shape summary of one neighborhood, in offsets from the
// query voxel.
struct ShapeStats {
  int count = 0;
  Vec3 eigenvalues = Vec3::Zero();  // of the covariance, ascending
  double normal_z = 0.0;            // |z| of the least-variance direction
  double major_z = 0.0;             // |z| of the largest-variance direction
  Vec3 mean_offset = Vec3::Zero();  // neighbor centroid minus the voxel
};

// Per-voxel context statistics over an exact radius neighborhood (self
// included). Positions are voxel mean positions.
struct NeighborhoodFeatures {
  double radius = 0.0;
  std::vector<Vec3> centered_position;  // position minus scene centroid
  std::vector<Vec3> color;
  std::vector<int> density;             // neighbors within radius, >= 1
  std::vector<Vec3> color_mean;
  std::vector<Vec3> position_variance;  // diagonal of the local covariance
  std::vector<ShapeStats> shape;        // at `radius`
  std::vector<double> context_radii;
  std::vector<std::vector<ShapeStats>> context;  // [radius][voxel]

  std::size_t size() const { return density.size(); }
};

// Width of the network input row built by input_matrix: x y z r g b, then
// density, color mean (3) and covariance diagonal (3).
inline constexpr int kFeatureWidth = 13;
// Optional shape columns at the base radius: eigenvalues (3), normal z,
// major z, mean offset (3).
inline constexpr int kShapeFeatureWidth = 8;
// Per context radius: log count and the shape columns.
inline constexpr int kContextFeatureWidth = 9;

inline int feature_width(bool shape, std::size_t context_radii = 0) {
  return kFeatureWidth + (shape ? kShapeFeatureWidth : 0) + kContextFeatureWidth * static_cast<int>(context_radii);
}

namespace detail {

// Running sums for one neighborhood.
struct MomentSums {
  int count = 0;
  Vec3 sum = Vec3::Zero();
  std::array<double, 6> outer{};  // xx yy zz xy xz yz

  void add(const Vec3& d) {
    ++count;
    sum += d;
    outer[0] += d.x() * d.x();
    outer[1] += d.y() * d.y();
    outer[2] += d.z() * d.z();
    outer[3] += d.x() * d.y();
    outer[4] += d.x() * d.z();
    outer[5] += d.y() * d.z();
  }

  void merge(const MomentSums& o) {
    count += o.count;
    sum += o.sum;
    for (int k = 0; k < 6; ++k) outer[k] += o.outer[k];
  }

  Vec3 diagonal() const { return {outer[0], outer[1], outer[2]}; }

  ShapeStats finish() const {
    ShapeStats s;
    s.count = count;
    if (count == 0) return s;
    const double inv = 1.0 / count;
    s.mean_offset = sum * inv;
    Eigen::Matrix3d cov;
    cov << outer[0], outer[3], outer[4], outer[3], outer[1], outer[5], outer[4], outer[5], outer[2];
    cov = cov * inv - s.mean_offset * s.mean_offset.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
    eig.computeDirect(cov);
    s.eigenvalues = eig.eigenvalues().cwiseMax(0.0);
    s.normal_z = count > 2 ? std::abs(eig.eigenvectors()(2, 0)) : 0.0;
    s.major_z = count > 1 ? std::abs(eig.eigenvectors()(2, 2)) : 0.0;
    return s;
  }
};

// Dense bucket grid over the bounding box, stored as sorted index runs.
// Buckets are at least `size` wide and double while the box would need too
// many.
class BucketGrid {
 public:
  BucketGrid(const std::vector<Vec3>& pos, double size) {
    lo_ = pos[0];
    Vec3 hi = pos[0];
    for (const Vec3& p : pos) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double limit = 16.0 * static_cast<double>(pos.size()) + 4096.0;
    size_ = size;
    while (true) {
      for (int a = 0; a < 3; ++a) dims_[a] = static_cast<std::int64_t>(std::floor((hi[a] - lo_[a]) / size_)) + 1;
      if (static_cast<double>(dims_[0]) * static_cast<double>(dims_[1]) * static_cast<double>(dims_[2]) <= limit) break;
      size_ *= 2.0;
    }
    const auto cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(cells + 1, 0);
    std::vector<std::size_t> cell_of(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) {
      const auto c = of(pos[i]);
      cell_of[i] = static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
    items_.resize(pos.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pos.size(); ++i) items_[fill[cell_of[i]]++] = i;
  }

  std::array<std::int64_t, 3> of(const Vec3& p) const {
    std::array<std::int64_t, 3> c{};
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((p[a] - lo_[a]) / size_)), 0, dims_[a] - 1);
    return c;
  }

  // Calls f(j) for every point in buckets within `reach` buckets of c, in
  // ascending bucket order.
  template <typename F>
  void visit(const std::array<std::int64_t, 3>& c, int reach, F&& f) const {
    const std::int64_t x0 = std::max<std::int64_t>(c[0] - reach, 0), x1 = std::min(c[0] + reach, dims_[0] - 1);
    const std::int64_t y0 = std::max<std::int64_t>(c[1] - reach, 0), y1 = std::min(c[1] + reach, dims_[1] - 1);
    const std::int64_t z0 = std::max<std::int64_t>(c[2] - reach, 0), z1 = std::min(c[2] + reach, dims_[2] - 1);
    for (std::int64_t x = x0; x <= x1; ++x) {
      for (std::int64_t y = y0; y <= y1; ++y) {
        const auto row = static_cast<std::size_t>((x * dims_[1] + y) * dims_[2]);
        for (std::size_t k = start_[row + static_cast<std::size_t>(z0)]; k < start_[row + static_cast<std::size_t>(z1) + 1]; ++k)
          f(items_[k]);
      }
    }
  }

 private:
  Vec3 lo_;
  double size_ = 1.0;
  std::array<std::int64_t, 3> dims_{};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> items_;
};

}  // namespace detail

// Features of the voxels listed in `rows` (in that order); neighbors and the
// centroid still come from the whole grid.
inline NeighborhoodFeatures featurize_rows(const VoxelGrid& grid, double radius, const std::vector<double>& context_radii,
                                           const std::vector<std::size_t>& rows) {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("featurize: radius must be > 0");
  for (double r : context_radii) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("featurize: context radii must be > 0");
  }
  const std::size_t n = grid.size();
  const std::size_t count = rows.size();
  for (std::size_t r : rows) {
    if (r >= n) throw ValidationError("featurize: row " + std::to_string(r) + " out of range");
  }
  NeighborhoodFeatures out;
  out.radius = radius;
  out.centered_position.resize(count);
  out.color.resize(count);
  out.density.assign(count, 0);
  out.color_mean.assign(count, Vec3::Zero());
  out.position_variance.assign(count, Vec3::Zero());
  out.shape.resize(count);
  out.context_radii = context_radii;
  out.context.assign(context_radii.size(), std::vector<ShapeStats>(count));
  if (count == 0) return out;

  std::vector<Vec3> pos(n), color(n);
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = grid.cell(i).position();
    color[i] = grid.cell(i).color();
    centroid += pos[i];
  }
  centroid /= static_cast<double>(n);

  // Radius-sized buckets: every neighbor of i lies in the 27 buckets around
  // i's bucket.
  const detail::BucketGrid near(pos, radius);
  const double r2 = radius * radius;
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t i = rows[q];
    out.centered_position[q] = pos[i] - centroid;
    out.color[q] = color[i];
    Vec3 color_sum = Vec3::Zero();
    detail::MomentSums m;
    near.visit(near.of(pos[i]), 1, [&](std::size_t j) {
      // offsets relative to the query voxel
      const Vec3 d = pos[j] - pos[i];
      if (d.squaredNorm() > r2) return;
      color_sum += color[j];
      m.add(d);
    });
    const double inv = 1.0 / m.count;
    out.density[q] = m.count;
    out.color_mean[q] = color_sum * inv;
    const Vec3 mean = m.sum * inv;
    out.position_variance[q] = (m.diagonal() * inv - mean.cwiseProduct(mean)).cwiseMax(0.0);
    out.shape[q] = m.finish();
  }

  if (context_radii.empty()) return out;
  // One pass at the largest radius with half-radius buckets. Each neighbor
  // lands in the ring of the smallest radius that holds it; rings are summed
  // outward afterwards.
  std::vector<std::size_t> order(context_radii.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return context_radii[a] < context_radii[b]; });
  std::vector<double> sq;
  for (std::size_t k : order) sq.push_back(context_radii[k] * context_radii[k]);
  const detail::BucketGrid far(pos, 0.5 * std::sqrt(sq.back()));
  std::vector<detail::MomentSums> rings(sq.size());
  for (std::size_t q = 0; q < count; ++q) {
    const std::size_t i = rows[q];
    std::fill(rings.begin(), rings.end(), detail::MomentSums{});
    far.visit(far.of(pos[i]), 2, [&](std::size_t j) {
      const Vec3 d = pos[j] - pos[i];
      const double d2 = d.squaredNorm();
      if (d2 > sq.back()) return;
      std::size_t k = 0;
      while (d2 > sq[k]) ++k;
      rings[k].add(d);
    });
    for (std::size_t k = 0; k < rings.size(); ++k) {
      if (k > 0) rings[k].merge(rings[k - 1]);
      out.context[order[k]][q] = rings[k].finish();
    }
  }
  return out;
}

inline NeighborhoodFeatures featurize(const VoxelGrid& grid, double radius,
                                      const std::vector<double>& context_radii = {}) {
  std::vector<std::size_t> rows(grid.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return featurize_rows(grid, radius, context_radii, rows);
}

// Network input rows. Density enters as log(count), spreads as standard
// deviations in units of the radius, so every column is O(1).
inline Eigen::MatrixXd input_matrix(const NeighborhoodFeatures& f, bool shape = false) {
  const auto n = static_cast<Eigen::Index>(f.size());
  Eigen::MatrixXd x(n, feature_width(shape, f.context_radii.size()));
  auto put_shape = [&x](Eigen::Index i, Eigen::Index col, const ShapeStats& s, double r) {
    x.block<1, 3>(i, col) = (s.eigenvalues.cwiseSqrt() / r).transpose();
    x(i, col + 3) = s.normal_z;
    x(i, col + 4) = s.major_z;
    x.block<1, 3>(i, col + 5) = (s.mean_offset / r).transpose();
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    x.block<1, 3>(i, 0) = f.centered_position[k].transpose();
    x.block<1, 3>(i, 3) = f.color[k].transpose();
    x(i, 6) = std::log(static_cast<double>(f.density[k]));
    x.block<1, 3>(i, 7) = f.color_mean[k].transpose();
    x.block<1, 3>(i, 10) = (f.position_variance[k].cwiseSqrt() / f.radius).transpose();
    Eigen::Index col = kFeatureWidth;
    if (shape) {
      put_shape(i, col, f.shape[k], f.radius);
      col += kShapeFeatureWidth;
    }
    for (std::size_t c = 0; c < f.context_radii.size(); ++c) {
      const ShapeStats& s = f.context[c][k];
      x(i, col) = std::log(static_cast<double>(std::max(s.count, 1)));
      put_shape(i, col + 1, s, f.context_radii[c]);
      col += kContextFeatureWidth;
    }
  }
  return x;
}

}  // namespace metricseg
