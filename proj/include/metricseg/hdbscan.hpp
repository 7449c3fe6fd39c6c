#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/kdtree.hpp"

namespace metricseg {

// Hierarchical density clustering over the rows of an n x d matrix:
// core distances -> mutual reachability -> minimum spanning tree ->
// condensed single-linkage tree -> excess-of-mass cluster selection.
//
// Distances are compared squared throughout.

struct ClusterParams {
  std::size_t min_cluster_size = 24;
  std::size_t min_samples = 5;
  double dbscan_eps = 0.5;

  void validate() const {
    if (min_cluster_size < 2) throw ValidationError("cluster params: min_cluster_size must be >= 2");
    if (min_samples < 1) throw ValidationError("cluster params: min_samples must be >= 1");
  }
};

inline constexpr int kNoise = -1;

struct ClusterResult {
  std::vector<int> labels;  // kNoise or 0..K-1
  std::vector<double> stability;
  std::vector<std::size_t> member_count;

  std::size_t cluster_count() const { return member_count.size(); }
  std::size_t noise_count() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise));
  }
};

// ---------------------------------------------------------------------------
// Core distances
// ---------------------------------------------------------------------------

// Squared distance from each row to its k-th nearest other row.
inline std::vector<double> core_distances_sq(const Eigen::MatrixXd& points, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1) throw ValidationError("core distances: k must be >= 1");
  if (n <= k) {
    throw ValidationError("core distances: need more than k=" + std::to_string(k) + " points, got " +
                          std::to_string(n));
  }
  KdTree tree(points);
  std::vector<double> core(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t idx = tree.order()[pos];
    core[idx] = tree.kth_neighbor_sq(tree.row(pos), idx, k);
  }
  return core;
}

inline std::vector<double> core_distances(const Eigen::MatrixXd& points, std::size_t k) {
  std::vector<double> core = core_distances_sq(points, k);
  for (double& c : core) c = std::sqrt(c);
  return core;
}

inline double mutual_reachability(std::size_t a, std::size_t b, const Eigen::MatrixXd& points,
                                  std::span<const double> core) {
  const Eigen::RowVectorXd pa = points.row(static_cast<Eigen::Index>(a));
  const Eigen::RowVectorXd pb = points.row(static_cast<Eigen::Index>(b));
  const double d = std::sqrt(squared_distance(pa.data(), pb.data(), points.cols()));
  return std::max({core[a], core[b], d});
}

// ---------------------------------------------------------------------------
// Minimum spanning tree of the mutual-reachability graph
// ---------------------------------------------------------------------------

struct MstEdge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double weight_sq = 0.0;

  double weight() const { return std::sqrt(weight_sq); }
};

// Strict total order on edges: (weight, smaller endpoint, larger endpoint).
// Under it the minimum spanning tree is unique.
inline bool edge_less(double wa, std::size_t a0, std::size_t a1, double wb, std::size_t b0, std::size_t b1) {
  return std::tie(wa, a0, a1) < std::tie(wb, b0, b1);
}

inline bool edge_less(const MstEdge& x, const MstEdge& y) {
  return edge_less(x.weight_sq, x.a, x.b, y.weight_sq, y.a, y.b);
}

// Dense Prim over the implicit complete graph, O(n^2) time, O(n d) memory.
// Remaining vertices are kept compacted in structure-of-arrays form so the
// distance loop streams contiguous memory.
inline std::vector<MstEdge> build_mst(const Eigen::MatrixXd& points, std::span<const double> core_sq) {
  const auto n = static_cast<std::size_t>(points.rows());
  const auto dim = static_cast<std::size_t>(points.cols());
  if (core_sq.size() != n) throw ValidationError("build_mst: core distance count mismatch");
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> coords(dim * n);
  for (std::size_t j = 0; j < dim; ++j) {
    for (std::size_t i = 0; i < n; ++i) coords[j * n + i] = points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> core(core_sq.begin(), core_sq.end());
  std::vector<double> best(n, kInf);
  std::vector<std::size_t> from(n, kNone);
  std::vector<double> acc(n);
  std::vector<double> q(dim);

  auto remove_at = [&](std::size_t pos, std::size_t last) {
    for (std::size_t j = 0; j < dim; ++j) coords[j * n + pos] = coords[j * n + last];
    idx[pos] = idx[last];
    core[pos] = core[last];
    best[pos] = best[last];
    from[pos] = from[last];
  };

  std::size_t remaining = n;
  std::size_t current = idx[0];
  double current_core = core[0];
  for (std::size_t j = 0; j < dim; ++j) q[j] = coords[j * n];
  remove_at(0, --remaining);

  while (remaining > 0) {
    std::fill_n(acc.begin(), remaining, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
      const double qj = q[j];
      const double* c = &coords[j * n];
      double* a = acc.data();
      for (std::size_t pos = 0; pos < remaining; ++pos) {
        const double diff = c[pos] - qj;
        a[pos] += diff * diff;
      }
    }
    std::size_t arg = 0;
    for (std::size_t pos = 0; pos < remaining; ++pos) {
      const double w = std::max(std::max(current_core, core[pos]), acc[pos]);
      const std::size_t v = idx[pos];
      if (w < best[pos] ||
          (w == best[pos] &&
           edge_less(w, std::min(current, v), std::max(current, v), best[pos], std::min(from[pos], v),
                     std::max(from[pos], v)))) {
        best[pos] = w;
        from[pos] = current;
      }
      if (pos > 0 && (best[pos] < best[arg] ||
                      (best[pos] == best[arg] &&
                       edge_less(best[pos], std::min(from[pos], v), std::max(from[pos], v), best[arg],
                                 std::min(from[arg], idx[arg]), std::max(from[arg], idx[arg]))))) {
        arg = pos;
      }
    }
    const std::size_t v = idx[arg];
    edges.push_back({std::min(from[arg], v), std::max(from[arg], v), best[arg]});
    current = v;
    current_core = core[arg];
    for (std::size_t j = 0; j < dim; ++j) q[j] = coords[j * n + arg];
    remove_at(arg, --remaining);
  }
  return edges;
}

// ---------------------------------------------------------------------------
// Condensed tree
// ---------------------------------------------------------------------------

// Density level of a zero-weight edge.
inline constexpr double kMaxLambda = 1e300;

inline double lambda_of(double weight_sq) {
  if (weight_sq <= 0.0) return kMaxLambda;
  return std::min(1.0 / std::sqrt(weight_sq), kMaxLambda);
}

// Rows (parent, child, lambda, child_size). Cluster ids start at n_points
// (the root); a child id below n_points is a single point falling out of its
// parent at density lambda.
struct CondensedTree {
  struct Row {
    std::size_t parent = 0;
    std::size_t child = 0;
    double lambda = 0.0;
    std::size_t child_size = 0;
  };
  std::size_t n_points = 0;
  std::size_t n_clusters = 0;
  std::vector<Row> rows;

  std::size_t root() const { return n_points; }
  bool is_point(std::size_t id) const { return id < n_points; }
};

inline CondensedTree condense_tree(std::vector<MstEdge> mst, std::size_t n_points, std::size_t min_cluster_size) {
  if (min_cluster_size < 2) throw ValidationError("condense_tree: min_cluster_size must be >= 2");
  if (n_points == 0 || mst.size() + 1 != n_points) {
    throw ValidationError("condense_tree: expected n-1 edges for n points");
  }
  CondensedTree tree;
  tree.n_points = n_points;
  tree.n_clusters = 1;
  if (n_points == 1) {
    tree.rows.push_back({n_points, 0, kMaxLambda, 1});
    return tree;
  }
  std::sort(mst.begin(), mst.end(), [](const MstEdge& x, const MstEdge& y) { return edge_less(x, y); });

  // Single-linkage dendrogram: leaves 0..n-1, merge m creates node n+m.
  const std::size_t total = 2 * n_points - 1;
  std::vector<std::size_t> left(total, 0), right(total, 0), size(total, 1);
  std::vector<double> height_sq(total, 0.0);
  {
    std::vector<std::size_t> parent(total);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
      }
      return x;
    };
    for (std::size_t m = 0; m < mst.size(); ++m) {
      const std::size_t node = n_points + m;
      const std::size_t ra = find(mst[m].a);
      const std::size_t rb = find(mst[m].b);
      left[node] = ra;
      right[node] = rb;
      size[node] = size[ra] + size[rb];
      height_sq[node] = mst[m].weight_sq;
      parent[ra] = node;
      parent[rb] = node;
    }
  }

  const std::size_t root = total - 1;
  std::vector<std::size_t> relabel(total, 0);
  std::vector<char> ignore(total, 0);
  relabel[root] = n_points;
  std::size_t next_label = n_points + 1;

  std::vector<std::size_t> bfs;
  bfs.reserve(total);
  bfs.push_back(root);
  std::vector<std::size_t> stack;
  auto fall_out = [&](std::size_t sub_root, std::size_t cluster, double lambda) {
    stack.assign(1, sub_root);
    while (!stack.empty()) {
      const std::size_t x = stack.back();
      stack.pop_back();
      ignore[x] = 1;
      if (x < n_points) {
        tree.rows.push_back({cluster, x, lambda, 1});
      } else {
        stack.push_back(right[x]);
        stack.push_back(left[x]);
      }
    }
  };

  for (std::size_t head = 0; head < bfs.size(); ++head) {
    const std::size_t node = bfs[head];
    if (node >= n_points) {
      bfs.push_back(left[node]);
      bfs.push_back(right[node]);
    }
    if (ignore[node] || node < n_points) continue;
    const std::size_t l = left[node];
    const std::size_t r = right[node];
    const double lambda = lambda_of(height_sq[node]);
    const bool big_l = size[l] >= min_cluster_size;
    const bool big_r = size[r] >= min_cluster_size;
    const std::size_t cluster = relabel[node];
    if (big_l && big_r) {
      relabel[l] = next_label++;
      tree.rows.push_back({cluster, relabel[l], lambda, size[l]});
      relabel[r] = next_label++;
      tree.rows.push_back({cluster, relabel[r], lambda, size[r]});
    } else if (!big_l && !big_r) {
      fall_out(l, cluster, lambda);
      fall_out(r, cluster, lambda);
    } else if (!big_l) {
      relabel[r] = cluster;
      fall_out(l, cluster, lambda);
    } else {
      relabel[l] = cluster;
      fall_out(r, cluster, lambda);
    }
  }
  tree.n_clusters = next_label - n_points;
  return tree;
}

// ---------------------------------------------------------------------------
// Excess-of-mass selection
// ---------------------------------------------------------------------------

// stability(C) = sum over rows with parent C of (lambda - lambda_birth(C)) * size.
inline std::vector<double> cluster_stabilities(const CondensedTree& tree) {
  std::vector<double> birth(tree.n_clusters, 0.0);
  for (const auto& row : tree.rows) {
    if (!tree.is_point(row.child)) birth[row.child - tree.n_points] = row.lambda;
  }
  std::vector<double> stability(tree.n_clusters, 0.0);
  for (const auto& row : tree.rows) {
    const std::size_t c = row.parent - tree.n_points;
    stability[c] += (row.lambda - birth[c]) * static_cast<double>(row.child_size);
  }
  return stability;
}

// Bottom-up selection: a cluster is kept iff its own stability exceeds the
// summed stability of the best selection inside it. The root competes only
// when it never splits; otherwise it is excluded and a single-cluster answer
// cannot arise from a split hierarchy. Points not under a selected cluster
// are noise. Clusters are numbered by their smallest member index.
inline ClusterResult extract_clusters_eom(const CondensedTree& tree) {
  const std::size_t nc = tree.n_clusters;
  const std::vector<double> stability = cluster_stabilities(tree);
  std::vector<std::size_t> parent_of(nc, 0);
  std::vector<std::vector<std::size_t>> children(nc);
  std::vector<std::size_t> point_parent(tree.n_points, 0);
  for (const auto& row : tree.rows) {
    const std::size_t p = row.parent - tree.n_points;
    if (tree.is_point(row.child)) {
      point_parent[row.child] = p;
    } else {
      const std::size_t c = row.child - tree.n_points;
      parent_of[c] = p;
      children[p].push_back(c);
    }
  }

  // Child ids are always larger than their parent's, so a descending sweep
  // is bottom-up.
  std::vector<double> subtree(nc, 0.0);
  std::vector<char> selected(nc, 0);
  for (std::size_t c = nc; c-- > 0;) {
    double child_sum = 0.0;
    for (std::size_t ch : children[c]) child_sum += subtree[ch];
    if (c == 0 && !children[0].empty()) break;
    if (stability[c] > child_sum) {
      selected[c] = 1;
      subtree[c] = stability[c];
      std::vector<std::size_t> stack(children[c].begin(), children[c].end());
      while (!stack.empty()) {
        const std::size_t x = stack.back();
        stack.pop_back();
        selected[x] = 0;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    } else {
      subtree[c] = child_sum;
    }
  }

  // Each point belongs to its nearest selected ancestor (its parent included).
  std::vector<std::ptrdiff_t> owner(nc, -1);
  for (std::size_t c = 0; c < nc; ++c) {
    if (selected[c]) {
      owner[c] = static_cast<std::ptrdiff_t>(c);
    } else if (c > 0) {
      owner[c] = owner[parent_of[c]];
    }
  }

  ClusterResult result;
  result.labels.assign(tree.n_points, kNoise);
  std::vector<int> number(nc, -1);
  for (std::size_t i = 0; i < tree.n_points; ++i) {
    const std::ptrdiff_t o = owner[point_parent[i]];
    if (o < 0) continue;
    const auto oc = static_cast<std::size_t>(o);
    if (number[oc] < 0) {
      number[oc] = static_cast<int>(result.member_count.size());
      result.member_count.push_back(0);
      result.stability.push_back(stability[oc]);
    }
    result.labels[i] = number[oc];
    ++result.member_count[static_cast<std::size_t>(number[oc])];
  }
  return result;
}

enum class MstMethod { kDensePrim, kTreeBoruvka };

struct HdbscanOptions {
  MstMethod mst = MstMethod::kTreeBoruvka;
};

inline std::vector<MstEdge> build_mst_boruvka(const Eigen::MatrixXd& points, std::span<const double> core_sq);

inline ClusterResult hdbscan(const Eigen::MatrixXd& points, const ClusterParams& params,
                             const HdbscanOptions& options = {}) {
  params.validate();
  const auto n = static_cast<std::size_t>(points.rows());
  if (!points.allFinite()) throw ValidationError("hdbscan: non-finite input");
  if (n < params.min_cluster_size || n <= params.min_samples) {
    ClusterResult all_noise;
    all_noise.labels.assign(n, kNoise);
    return all_noise;
  }
  const std::vector<double> core = core_distances_sq(points, params.min_samples);
  std::vector<MstEdge> mst =
      options.mst == MstMethod::kDensePrim ? build_mst(points, core) : build_mst_boruvka(points, core);
  return extract_clusters_eom(condense_tree(std::move(mst), n, params.min_cluster_size));
}

// Per-cluster confidence in (0,1]: stability per member, divided by the
// largest such value in the result.
inline std::vector<double> cluster_confidences(const ClusterResult& r) {
  std::vector<double> conf(r.cluster_count(), 1.0);
  double best = 0.0;
  for (std::size_t c = 0; c < conf.size(); ++c) {
    conf[c] = r.stability[c] / static_cast<double>(std::max<std::size_t>(r.member_count[c], 1));
    best = std::max(best, conf[c]);
  }
  for (double& c : conf) {
    c = best > 0.0 ? c / best : 1.0;
    c = std::clamp(c, std::numeric_limits<double>::min(), 1.0);
  }
  return conf;
}

// ---------------------------------------------------------------------------
// DBSCAN baseline
// ---------------------------------------------------------------------------

// Textbook DBSCAN: a row is core when at least min_pts rows (itself included)
// lie within eps. Clusters grow from cores in index order; border rows join
// the first cluster that reaches them.
inline ClusterResult dbscan_baseline(const Eigen::MatrixXd& points, double eps, std::size_t min_pts) {
  if (!(eps > 0)) throw ValidationError("dbscan: eps must be > 0");
  const auto n = static_cast<std::size_t>(points.rows());
  const auto dim = points.cols();
  const Eigen::MatrixXd rows = points.transpose();  // column i = point i
  const double eps_sq = eps * eps;
  auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      if (squared_distance(rows.col(static_cast<Eigen::Index>(i)).data(), rows.col(static_cast<Eigen::Index>(j)).data(),
                           dim) <= eps_sq) {
        out.push_back(j);
      }
    }
    return out;
  };

  ClusterResult result;
  result.labels.assign(n, kNoise);
  std::vector<char> visited(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i]) continue;
    visited[i] = 1;
    std::vector<std::size_t> seeds = neighbors(i);
    if (seeds.size() < min_pts) continue;
    const int label = static_cast<int>(result.member_count.size());
    result.member_count.push_back(0);
    result.stability.push_back(0.0);
    result.labels[i] = label;
    for (std::size_t head = 0; head < seeds.size(); ++head) {
      const std::size_t j = seeds[head];
      if (result.labels[j] == kNoise) result.labels[j] = label;
      if (visited[j]) continue;
      visited[j] = 1;
      std::vector<std::size_t> more = neighbors(j);
      if (more.size() >= min_pts) seeds.insert(seeds.end(), more.begin(), more.end());
    }
  }
  for (int l : result.labels) {
    if (l != kNoise) ++result.member_count[static_cast<std::size_t>(l)];
  }
  return result;
}

}  // namespace metricseg

#include "metricseg/boruvka.hpp"
