// Two blobs of very different spread: HDBSCAN with default settings against
// DBSCAN across a sweep of eps values.

#include <cstdio>
#include <random>
#include <vector>

#include "metricseg/metricseg.hpp"

using namespace metricseg;

int main() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  const Eigen::Index n = 100;
  Eigen::MatrixXd p(2 * n, 2);
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const bool tight = i < n;
    const double sigma = tight ? 0.01 : 0.2;
    p(i, 0) = (tight ? 0.0 : 3.0) + sigma * g(rng);
    p(i, 1) = sigma * g(rng);
  }

  const ClusterResult h = hdbscan(p, ClusterParams{});
  std::printf("hdbscan (min_cluster_size %zu, min_samples %zu): %zu clusters, %zu noise\n",
              ClusterParams{}.min_cluster_size, ClusterParams{}.min_samples, h.cluster_count(), h.noise_count());
  const std::vector<double> conf = cluster_confidences(h);
  for (std::size_t c = 0; c < h.cluster_count(); ++c)
    std::printf("  cluster %zu: %zu members, confidence %.3f\n", c, h.member_count[c], conf[c]);

  std::printf("\ndbscan, min_pts 5\n   eps clusters noise\n");
  for (double eps : {0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.5}) {
    const ClusterResult d = dbscan_baseline(p, eps, 5);
    std::printf("%6.2f %8zu %5zu\n", eps, d.cluster_count(), d.noise_count());
  }
  return 0;
}
