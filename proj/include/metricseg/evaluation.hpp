#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/loss.hpp"
#include "metricseg/point_cloud.hpp"

namespace metricseg {

struct GroundTruthInstance {
  std::size_t scene = 0;
  std::vector<std::size_t> points;  // sorted, unique
  int semantic = 0;
};

struct PredictedInstance {
  std::size_t scene = 0;
  std::vector<std::size_t> points;  // sorted, unique
  int semantic = 0;
  double confidence = 1.0;  // in (0,1]
};

// |a ∩ b| / |a ∪ b| for sorted index sets.
inline double iou(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.empty() && b.empty()) throw ValidationError("iou: both sets empty");
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline std::vector<double> ap_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

namespace detail {

// Predictions and ground truths of one class, with IoU between every
// same-scene pair precomputed.
struct ClassMatchTable {
  std::vector<std::size_t> pred_order;  // prediction indices, descending confidence
  std::vector<std::size_t> gt_index;    // ground-truth indices of this class
  std::vector<std::vector<double>> ious;  // [rank][gt slot], -1 across scenes
};

inline ClassMatchTable class_table(std::span<const PredictedInstance> preds, std::span<const GroundTruthInstance> gts,
                                   int cls) {
  ClassMatchTable t;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].semantic == cls) t.pred_order.push_back(i);
  }
  std::stable_sort(t.pred_order.begin(), t.pred_order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (gts[g].semantic == cls) t.gt_index.push_back(g);
  }
  t.ious.assign(t.pred_order.size(), std::vector<double>(t.gt_index.size(), -1.0));
  for (std::size_t r = 0; r < t.pred_order.size(); ++r) {
    const PredictedInstance& p = preds[t.pred_order[r]];
    for (std::size_t s = 0; s < t.gt_index.size(); ++s) {
      const GroundTruthInstance& g = gts[t.gt_index[s]];
      if (g.scene == p.scene) t.ious[r][s] = iou(p.points, g.points);
    }
  }
  return t;
}

struct MatchOutcome {
  double ap = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t missed = 0;
};

// Greedy confidence-ordered matching, then area under the precision-recall
// curve with all-point interpolation (precision at each step replaced by the
// best precision at any later step).
inline MatchOutcome match_class(const ClassMatchTable& t, double tau) {
  MatchOutcome out;
  const std::size_t n_gt = t.gt_index.size();
  std::vector<char> taken(n_gt, 0);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < t.pred_order.size(); ++r) {
    std::optional<std::size_t> best;
    for (std::size_t s = 0; s < n_gt; ++s) {
      const double v = t.ious[r][s];
      if (taken[s] || v < tau) continue;
      if (!best || v > t.ious[r][*best]) best = s;
    }
    if (best) {
      taken[*best] = 1;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(n_gt ? static_cast<double>(tp) / static_cast<double>(n_gt) : 0.0);
  }
  for (std::size_t r = precision.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double prev = 0.0;
  for (std::size_t r = 0; r < precision.size(); ++r) {
    out.ap += (recall[r] - prev) * precision[r];
    prev = recall[r];
  }
  out.true_positives = tp;
  out.false_positives = t.pred_order.size() - tp;
  out.missed = n_gt - tp;
  return out;
}

}  // namespace detail

// AP of one class at IoU threshold tau; nullopt when the class has no ground
// truth (absent, not zero).
inline std::optional<double> ap_at_threshold(std::span<const PredictedInstance> preds,
                                             std::span<const GroundTruthInstance> gts, int cls, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("ap: threshold must be in (0,1]");
  const detail::ClassMatchTable t = detail::class_table(preds, gts, cls);
  if (t.gt_index.empty()) return std::nullopt;
  return detail::match_class(t, tau).ap;
}

struct APReport {
  std::vector<double> thresholds = ap_thresholds();
  std::map<int, std::vector<double>> class_ap;  // per threshold
  std::map<int, double> class_mean;
  std::vector<double> overall_at;  // mean over classes, per threshold
  double overall = 0.0;            // mean over classes of class_mean
  // Counts at the first (0.50) threshold.
  std::size_t matched = 0;
  std::size_t unmatched_predictions = 0;
  std::size_t unmatched_ground_truth = 0;

  double overall_at_threshold(double tau) const {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      if (std::abs(thresholds[k] - tau) < 1e-12) return overall_at.empty() ? 0.0 : overall_at[k];
    }
    throw ValidationError("report has no threshold " + std::to_string(tau));
  }
};

inline APReport ap_average(std::span<const PredictedInstance> preds, std::span<const GroundTruthInstance> gts) {
  APReport report;
  std::map<int, int> classes;
  for (const auto& g : gts) classes[g.semantic] = 1;
  report.overall_at.assign(report.thresholds.size(), 0.0);
  for (const auto& [cls, unused] : classes) {
    const detail::ClassMatchTable t = detail::class_table(preds, gts, cls);
    std::vector<double> aps;
    for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
      const detail::MatchOutcome m = detail::match_class(t, report.thresholds[k]);
      aps.push_back(m.ap);
      report.overall_at[k] += m.ap;
      if (k == 0) {
        report.matched += m.true_positives;
        report.unmatched_predictions += m.false_positives;
        report.unmatched_ground_truth += m.missed;
      }
    }
    report.class_mean[cls] = std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
    report.class_ap[cls] = std::move(aps);
  }
  // Predictions of classes absent from ground truth are not scored but are
  // still unmatched.
  for (const auto& p : preds) report.unmatched_predictions += classes.count(p.semantic) ? 0 : 1;
  if (!classes.empty()) {
    for (double& v : report.overall_at) v /= static_cast<double>(classes.size());
    double sum = 0.0;
    for (const auto& [cls, m] : report.class_mean) sum += m;
    report.overall = sum / static_cast<double>(classes.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization
//
// Table: header "class ap50 ap55 ... ap95 mean", one row per class in
// ascending id, then a row named "overall". Values with 6 decimals.
//
// Key-value: one "key=value" per line, in this order:
//   classes=<comma-separated ids>
//   class.<id>.ap50 ... class.<id>.ap95, class.<id>.mean    (per class)
//   overall.ap50 ... overall.ap95, overall.mean
//   matched, unmatched_predictions, unmatched_ground_truth
// Reals in shortest round-trip form.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string threshold_tag(double t) { return "ap" + std::to_string(static_cast<int>(std::lround(t * 100))); }

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string format_report_table(const APReport& r) {
  std::string out = "class";
  for (double t : r.thresholds) out += " " + detail::threshold_tag(t);
  out += " mean\n";
  for (const auto& [cls, aps] : r.class_ap) {
    out += std::to_string(cls);
    for (double v : aps) out += " " + detail::fixed6(v);
    out += " " + detail::fixed6(r.class_mean.at(cls)) + "\n";
  }
  out += "overall";
  for (double v : r.overall_at) out += " " + detail::fixed6(v);
  out += " " + detail::fixed6(r.overall) + "\n";
  return out;
}

inline std::string format_report_kv(const APReport& r) {
  std::string out = "classes=";
  bool first = true;
  for (const auto& [cls, aps] : r.class_ap) {
    out += (first ? "" : ",") + std::to_string(cls);
    first = false;
  }
  out += "\n";
  for (const auto& [cls, aps] : r.class_ap) {
    const std::string base = "class." + std::to_string(cls) + ".";
    for (std::size_t k = 0; k < aps.size(); ++k) {
      out += base + detail::threshold_tag(r.thresholds[k]) + "=" + detail::shortest(aps[k]) + "\n";
    }
    out += base + "mean=" + detail::shortest(r.class_mean.at(cls)) + "\n";
  }
  for (std::size_t k = 0; k < r.overall_at.size(); ++k) {
    out += "overall." + detail::threshold_tag(r.thresholds[k]) + "=" + detail::shortest(r.overall_at[k]) + "\n";
  }
  out += "overall.mean=" + detail::shortest(r.overall) + "\n";
  out += "matched=" + std::to_string(r.matched) + "\n";
  out += "unmatched_predictions=" + std::to_string(r.unmatched_predictions) + "\n";
  out += "unmatched_ground_truth=" + std::to_string(r.unmatched_ground_truth) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Instances from labeled clouds
// ---------------------------------------------------------------------------

namespace detail {

// Groups points by instance id in ascending id order; the class is the
// majority semantic id of the members (lowest id on ties). Points without an
// instance id are ignored.
inline std::vector<std::pair<int, GroundTruthInstance>> group_instances(const PointCloud& cloud, std::size_t scene) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud[i].instance_id) groups[*cloud[i].instance_id].push_back(i);
  }
  std::vector<std::pair<int, GroundTruthInstance>> out;
  for (auto& [id, pts] : groups) {
    std::map<int, std::size_t> votes;
    for (std::size_t i : pts) ++votes[cloud[i].semantic_id.value_or(-1)];
    int cls = -1;
    std::size_t best = 0;
    for (const auto& [c, n] : votes) {
      if (n > best) {
        cls = c;
        best = n;
      }
    }
    out.push_back({id, GroundTruthInstance{scene, std::move(pts), cls}});
  }
  return out;
}

}  // namespace detail

inline std::vector<GroundTruthInstance> ground_truth_instances(const PointCloud& cloud, std::size_t scene) {
  std::vector<GroundTruthInstance> out;
  for (auto& [id, g] : detail::group_instances(cloud, scene)) out.push_back(std::move(g));
  return out;
}

// Confidences are looked up by instance id and default to 1.
inline std::vector<PredictedInstance> predicted_instances(const PointCloud& cloud, std::size_t scene,
                                                          const std::map<int, double>& confidence = {}) {
  std::vector<PredictedInstance> out;
  for (auto& [id, g] : detail::group_instances(cloud, scene)) {
    auto it = confidence.find(id);
    out.push_back({scene, std::move(g.points), g.semantic, it == confidence.end() ? 1.0 : it->second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distance-to-mean export
// ---------------------------------------------------------------------------

// Distance of every labeled row to its instance mean. Unlabeled rows get 0.
inline std::vector<double> distances_to_mean(const Embeddings& e, const InstancePartition& part) {
  const Eigen::MatrixXd mu = instance_means(e, part);
  std::vector<double> out(static_cast<std::size_t>(e.rows()), 0.0);
  for (std::size_t i = 0; i < part.instance_count(); ++i) {
    for (std::size_t k : part.members(i)) {
      out[k] = (e.row(static_cast<Eigen::Index>(k)) - mu.row(static_cast<Eigen::Index>(i))).norm();
    }
  }
  return out;
}

// Writes labeled rows as a v1 point cloud: position, then the distance to the
// instance mean min-max normalized into all three color channels, then the
// instance id. Returns the raw distances of the written rows.
inline std::vector<double> export_distance_heatmap(const std::vector<Vec3>& positions, const Embeddings& e,
                                                   const InstancePartition& part, const std::string& path) {
  if (positions.size() != static_cast<std::size_t>(e.rows())) {
    throw ValidationError("heatmap: position count does not match embeddings");
  }
  const std::vector<double> dist = distances_to_mean(e, part);
  std::vector<std::size_t> rows;
  std::vector<int> ids(dist.size(), -1);
  for (std::size_t i = 0; i < part.instance_count(); ++i) {
    for (std::size_t k : part.members(i)) ids[k] = part.id(i);
  }
  for (std::size_t k = 0; k < dist.size(); ++k) {
    if (ids[k] >= 0) rows.push_back(k);
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t k : rows) {
    lo = std::min(lo, dist[k]);
    hi = std::max(hi, dist[k]);
  }
  PointCloud cloud;
  std::vector<double> written;
  for (std::size_t k : rows) {
    Point p;
    p.position = positions[k];
    const double t = hi > lo ? (dist[k] - lo) / (hi - lo) : 0.0;
    p.color = Vec3::Constant(t);
    p.instance_id = ids[k];
    cloud.push_back(p);
    written.push_back(dist[k]);
  }
  write_cloud(path, cloud, true, false);
  return written;
}

}  // namespace metricseg
