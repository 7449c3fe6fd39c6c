#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace metricseg {

// Squared Euclidean distance accumulated in coordinate order. Every distance
// in the clustering code goes through this exact sequence of operations, so
// independently computed values for the same pair are bit-identical.
inline double squared_distance(const double* a, const double* b, Eigen::Index dim) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double diff = a[j] - b[j];
    acc += diff * diff;
  }
  return acc;
}

// Static kd-tree over the rows of an n x d matrix. Rows are copied into a
// row-major buffer in tree order; queries report original row indices.
class KdTree {
 public:
  struct Node {
    std::size_t begin = 0;  // range into order()
    std::size_t end = 0;
    std::size_t left = 0;   // child node ids; 0 means leaf
    std::size_t right = 0;
  };

  explicit KdTree(const Eigen::MatrixXd& points, std::size_t leaf_size = 16)
      : dim_(points.cols()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    const auto n = static_cast<std::size_t>(points.rows());
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rows_.resize(n * static_cast<std::size_t>(dim_));
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < dim_; ++j) rows_[i * dim_ + j] = points(static_cast<Eigen::Index>(i), j);
    }
    if (n == 0) return;
    nodes_.reserve(2 * n / leaf_size_ + 2);
    build(0, n);
    // Reorder the coordinate buffer into tree order.
    std::vector<double> sorted(rows_.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(&rows_[order_[i] * dim_], dim_, &sorted[i * dim_]);
    }
    rows_.swap(sorted);
  }

  std::size_t size() const { return order_.size(); }
  Eigen::Index dim() const { return dim_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::size_t>& order() const { return order_; }
  // Coordinates of the point at tree position pos.
  const double* row(std::size_t pos) const { return &rows_[pos * dim_]; }
  const double* lo(std::size_t node) const { return &bounds_[2 * node * dim_]; }
  const double* hi(std::size_t node) const { return &bounds_[(2 * node + 1) * dim_]; }

  // Lower bound on the squared distance from q to any point inside the node.
  double min_sq_dist(std::size_t node, const double* q) const {
    const double* l = lo(node);
    const double* h = hi(node);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      double gap = 0.0;
      if (q[j] < l[j]) {
        gap = l[j] - q[j];
      } else if (q[j] > h[j]) {
        gap = q[j] - h[j];
      }
      acc += gap * gap;
    }
    return acc;
  }

  // Squared distance from row `self` (original index, coordinates q) to its
  // k-th nearest other row.
  double kth_neighbor_sq(const double* q, std::size_t self, std::size_t k) const {
    std::priority_queue<double> heap;  // max-heap of the k best
    knn_recurse(0, q, self, k, heap);
    return heap.top();
  }

 private:
  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, 0, 0});
    bounds_.resize(2 * (id + 1) * dim_);
    double* l = &bounds_[2 * id * dim_];
    double* h = &bounds_[(2 * id + 1) * dim_];
    std::fill(l, l + dim_, std::numeric_limits<double>::infinity());
    std::fill(h, h + dim_, -std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      const double* p = &rows_[order_[i] * dim_];
      for (Eigen::Index j = 0; j < dim_; ++j) {
        l[j] = std::min(l[j], p[j]);
        h[j] = std::max(h[j], p[j]);
      }
    }
    if (end - begin <= leaf_size_) return id;
    Eigen::Index axis = 0;
    double spread = -1.0;
    for (Eigen::Index j = 0; j < dim_; ++j) {
      if (h[j] - l[j] > spread) {
        spread = h[j] - l[j];
        axis = j;
      }
    }
    if (spread <= 0.0) return id;  // all points identical
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid), order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       const double va = rows_[a * dim_ + axis];
                       const double vb = rows_[b * dim_ + axis];
                       return va < vb || (va == vb && a < b);
                     });
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void knn_recurse(std::size_t node, const double* q, std::size_t self, std::size_t k,
                   std::priority_queue<double>& heap) const {
    const Node& nd = nodes_[node];
    if (nd.left == 0) {
      for (std::size_t pos = nd.begin; pos < nd.end; ++pos) {
        if (order_[pos] == self) continue;
        const double d = squared_distance(q, row(pos), dim_);
        if (heap.size() < k) {
          heap.push(d);
        } else if (d < heap.top()) {
          heap.pop();
          heap.push(d);
        }
      }
      return;
    }
    const double dl = min_sq_dist(nd.left, q);
    const double dr = min_sq_dist(nd.right, q);
    const std::size_t first = dl <= dr ? nd.left : nd.right;
    const std::size_t second = dl <= dr ? nd.right : nd.left;
    const double d_first = std::min(dl, dr);
    const double d_second = std::max(dl, dr);
    if (heap.size() < k || d_first < heap.top()) knn_recurse(first, q, self, k, heap);
    if (heap.size() < k || d_second < heap.top()) knn_recurse(second, q, self, k, heap);
  }

  Eigen::Index dim_ = 0;
  std::size_t leaf_size_ = 16;
  std::vector<std::size_t> order_;
  std::vector<double> rows_;
  std::vector<double> bounds_;
  std::vector<Node> nodes_;
};

}  // namespace metricseg
