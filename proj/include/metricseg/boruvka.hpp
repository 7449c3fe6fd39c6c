#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "metricseg/hdbscan.hpp"
#include "metricseg/kdtree.hpp"

namespace metricseg {

// Boruvka over the mutual-reachability graph with kd-tree pruning. Each round
// finds, for every component, its minimum outgoing edge under edge_less, so
// the result is the same unique tree build_mst produces.
inline std::vector<MstEdge> build_mst_boruvka(const Eigen::MatrixXd& points, std::span<const double> core_sq) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (core_sq.size() != n) throw ValidationError("build_mst: core distance count mismatch");
  std::vector<MstEdge> edges;
  if (n < 2) return edges;
  edges.reserve(n - 1);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kMixed = std::numeric_limits<std::size_t>::max();
  const KdTree tree(points);
  const auto& nodes = tree.nodes();
  const auto& order = tree.order();
  const Eigen::Index dim = tree.dim();

  std::vector<double> core_pos(n);
  for (std::size_t pos = 0; pos < n; ++pos) core_pos[pos] = core_sq[order[pos]];
  std::vector<double> node_min_core(nodes.size(), kInf);
  for (std::size_t id = nodes.size(); id-- > 0;) {
    for (std::size_t pos = nodes[id].begin; pos < nodes[id].end; ++pos) {
      node_min_core[id] = std::min(node_min_core[id], core_pos[pos]);
    }
  }

  std::vector<std::size_t> uf(n);
  std::iota(uf.begin(), uf.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };

  std::vector<std::size_t> comp_pos(n);
  std::vector<std::size_t> node_comp(nodes.size());
  std::vector<double> best_w(n);
  std::vector<std::size_t> best_a(n), best_b(n);
  std::vector<std::size_t> stack;

  std::size_t components = n;
  while (components > 1) {
    for (std::size_t pos = 0; pos < n; ++pos) comp_pos[pos] = find(order[pos]);
    // Children are created after their parent, so a descending sweep sees
    // both children before the parent.
    for (std::size_t id = nodes.size(); id-- > 0;) {
      const auto& nd = nodes[id];
      if (nd.left == 0) {
        std::size_t c = comp_pos[nd.begin];
        for (std::size_t pos = nd.begin + 1; pos < nd.end && c != kMixed; ++pos) {
          if (comp_pos[pos] != c) c = kMixed;
        }
        node_comp[id] = c;
      } else {
        node_comp[id] = node_comp[nd.left] == node_comp[nd.right] ? node_comp[nd.left] : kMixed;
      }
    }
    std::fill(best_w.begin(), best_w.end(), kInf);

    for (std::size_t qpos = 0; qpos < n; ++qpos) {
      const std::size_t a = order[qpos];
      const std::size_t ca = comp_pos[qpos];
      const double core_a = core_pos[qpos];
      if (core_a > best_w[ca]) continue;
      const double* q = tree.row(qpos);
      stack.assign(1, 0);
      while (!stack.empty()) {
        const std::size_t id = stack.back();
        stack.pop_back();
        if (node_comp[id] == ca) continue;
        const double lb = std::max({core_a, node_min_core[id], tree.min_sq_dist(id, q)});
        if (lb > best_w[ca]) continue;
        const auto& nd = nodes[id];
        if (nd.left == 0) {
          for (std::size_t pos = nd.begin; pos < nd.end; ++pos) {
            if (comp_pos[pos] == ca) continue;
            const double w = std::max(std::max(core_a, core_pos[pos]), squared_distance(q, tree.row(pos), dim));
            if (w > best_w[ca]) continue;
            const std::size_t b = order[pos];
            const std::size_t lo = std::min(a, b);
            const std::size_t hi = std::max(a, b);
            if (best_w[ca] == kInf || edge_less(w, lo, hi, best_w[ca], best_a[ca], best_b[ca])) {
              best_w[ca] = w;
              best_a[ca] = lo;
              best_b[ca] = hi;
            }
          }
        } else {
          const double dl = tree.min_sq_dist(nd.left, q);
          const double dr = tree.min_sq_dist(nd.right, q);
          // Push the farther child first so the nearer one is explored first.
          if (dl <= dr) {
            stack.push_back(nd.right);
            stack.push_back(nd.left);
          } else {
            stack.push_back(nd.left);
            stack.push_back(nd.right);
          }
        }
      }
    }

    std::vector<MstEdge> round;
    for (std::size_t c = 0; c < n; ++c) {
      if (best_w[c] < kInf && find(c) == c) round.push_back({best_a[c], best_b[c], best_w[c]});
    }
    std::sort(round.begin(), round.end(), [](const MstEdge& x, const MstEdge& y) { return edge_less(x, y); });
    for (const MstEdge& e : round) {
      const std::size_t ra = find(e.a);
      const std::size_t rb = find(e.b);
      if (ra == rb) continue;
      uf[ra] = rb;
      edges.push_back(e);
      --components;
    }
  }
  return edges;
}

}  // namespace metricseg
