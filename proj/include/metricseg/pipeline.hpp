#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "metricseg/checkpoint.hpp"
#include "metricseg/config.hpp"
#include "metricseg/error.hpp"
#include "metricseg/evaluation.hpp"
#include "metricseg/features.hpp"
#include "metricseg/hdbscan.hpp"
#include "metricseg/loss.hpp"
#include "metricseg/model.hpp"
#include "metricseg/point_cloud.hpp"
#include "metricseg/scene.hpp"
#include "metricseg/voxel.hpp"

namespace metricseg {

namespace fs = std::filesystem;

// Independent 64-bit stream seed for item `index` of a run seeded with `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

inline std::string scene_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu.pc", index);
  return buf;
}

// Sorted *.pc files of a directory.
inline std::vector<fs::path> list_scene_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pc") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline SceneConfig scene_config_for(const PipelineConfig& config, std::size_t index) {
  SceneConfig sc = config.scene;
  sc.seed = derive_seed(config.seed, index);
  return sc;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

inline std::vector<fs::path> cmd_gen(const PipelineConfig& config, std::size_t count, const fs::path& out_dir) {
  ensure_directory(out_dir);
  std::vector<fs::path> written;
  std::string manifest = "# file seed\n";
  for (std::size_t i = 0; i < count; ++i) {
    const SceneConfig sc = scene_config_for(config, i);
    const fs::path path = out_dir / scene_file_name(i);
    write_cloud(path.string(), generate_scene(sc));
    manifest += path.filename().string() + ' ' + std::to_string(sc.seed) + '\n';
    written.push_back(path);
  }
  write_text_file((out_dir / "manifest.txt").string(), manifest);
  return written;
}

// ---------------------------------------------------------------------------
// Shared per-scene preparation
// ---------------------------------------------------------------------------

struct PreparedScene {
  VoxelGrid grid;
  Eigen::MatrixXd input;
};

inline PreparedScene prepare_scene(const PointCloud& cloud, const PipelineConfig& config) {
  PreparedScene s{voxelize(cloud, config.voxel_size), {}};
  s.input = input_matrix(featurize(s.grid, config.radius(), config.context_radii), config.shape_features);
  return s;
}

// Per-voxel metric-loss labels: ground-truth instance id on foreground voxels,
// -1 elsewhere.
inline std::vector<int> foreground_instance_labels(const VoxelGrid& grid, const PipelineConfig& config) {
  std::vector<int> labels(grid.size(), -1);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const VoxelCell& c = grid.cell(v);
    if (c.instance_id && c.semantic_id && !config.is_background(*c.semantic_id)) labels[v] = *c.instance_id;
  }
  return labels;
}

inline std::vector<int> semantic_targets(const VoxelGrid& grid) {
  std::vector<int> t(grid.size(), -1);
  for (std::size_t v = 0; v < grid.size(); ++v) t[v] = grid.cell(v).semantic_id.value_or(-1);
  return t;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct StepStats {
  std::uint64_t step = 0;
  double lr = 0.0;
  double semantic_loss = 0.0;
  double metric_loss = 0.0;
};

namespace detail {
// k distinct indices of [0, n), ascending.
inline std::vector<std::size_t> sample_rows(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0x726f7773ULL));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}
}  // namespace detail

// One optimizer step. The batch and augmentation draws depend only on
// (config.seed, state.step), so a resumed run repeats an uninterrupted one.
//
// `prepared` may hold prepare_scene() of every scene; it is used only when
// augmentation is off and gives the same result as recomputing.
inline StepStats train_step(ModelState& state, const std::vector<PointCloud>& scenes, const PipelineConfig& config,
                            const std::vector<PreparedScene>* prepared = nullptr) {
  if (scenes.empty()) throw ValidationError("train: no scenes");
  const TrainingConfig& tc = config.training;
  std::mt19937_64 rng(derive_seed(config.seed ^ 0x7472616eULL, state.step));
  std::uniform_int_distribution<std::size_t> pick(0, scenes.size() - 1);
  std::vector<std::size_t> batch(tc.batch_size);
  std::vector<std::uint64_t> aug_seeds(tc.batch_size);
  for (std::size_t b = 0; b < tc.batch_size; ++b) {
    batch[b] = pick(rng);
    aug_seeds[b] = rng();
  }

  StepStats stats;
  stats.step = state.step;
  stats.lr = lr_schedule(tc.base_lr, state.step, tc.lr_decay, tc.lr_decay_every);
  const double inv_batch = 1.0 / static_cast<double>(tc.batch_size);
  const bool use_cache = prepared && !tc.augment;
  if (use_cache && prepared->size() != scenes.size()) throw ValidationError("train: prepared scene count mismatch");
  Gradients total;
  for (std::size_t b = 0; b < tc.batch_size; ++b) {
    const PointCloud& src = scenes[batch[b]];
    const PreparedScene* cached = use_cache ? &(*prepared)[batch[b]] : nullptr;
    VoxelGrid own;
    if (!cached) own = voxelize(tc.augment ? augment(src, aug_seeds[b], config.augment) : src, config.voxel_size);
    const VoxelGrid& grid = cached ? cached->grid : own;
    std::vector<std::size_t> rows;
    if (tc.voxels_per_scene > 0 && tc.voxels_per_scene < grid.size()) {
      rows = detail::sample_rows(grid.size(), tc.voxels_per_scene, aug_seeds[b]);
    } else {
      rows.resize(grid.size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    Eigen::MatrixXd x;
    if (cached) {
      x.resize(static_cast<Eigen::Index>(rows.size()), cached->input.cols());
      for (std::size_t r = 0; r < rows.size(); ++r)
        x.row(static_cast<Eigen::Index>(r)) = cached->input.row(static_cast<Eigen::Index>(rows[r]));
    } else {
      x = input_matrix(featurize_rows(grid, config.radius(), config.context_radii, rows), config.shape_features);
    }
    const std::vector<int> all_targets = semantic_targets(grid);
    const std::vector<int> all_labels = foreground_instance_labels(grid, config);
    std::vector<int> targets(rows.size()), labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      targets[r] = all_targets[rows[r]];
      labels[r] = all_labels[rows[r]];
    }
    ForwardCache cache;
    const ForwardResult out = forward(state, x, &cache);

    CrossEntropy ce = cross_entropy(out.logits, targets);
    const InstancePartition part(labels);
    Eigen::MatrixXd ge = Eigen::MatrixXd::Zero(out.embeddings.rows(), out.embeddings.cols());
    double metric = 0.0;
    if (part.instance_count() > 0) {
      metric = total_loss(out.embeddings, part, config.loss);
      ge = loss_gradients(out.embeddings, part, config.loss) * inv_batch;
    }
    if (!std::isfinite(metric) || !std::isfinite(ce.loss)) {
      throw ValidationError("train: non-finite loss at step " + std::to_string(state.step) + " (scene " +
                            std::to_string(batch[b]) + ", metric " + std::to_string(metric) + ", semantic " +
                            std::to_string(ce.loss) + ")");
    }
    stats.metric_loss += metric * inv_batch;
    stats.semantic_loss += ce.loss * inv_batch;
    ce.grad *= tc.semantic_weight * inv_batch;
    Gradients g = backward(state, cache, ge, ce.grad);
    if (total.empty()) {
      total = std::move(g);
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) total[i] += g[i];
    }
  }
  adam_step(state, total, stats.lr);
  return stats;
}

inline std::vector<PointCloud> load_scene_dir(const fs::path& dir) {
  const auto files = list_scene_files(dir);
  if (files.empty()) throw ValidationError("no scene files (*.pc) in " + dir.string());
  std::vector<PointCloud> scenes;
  for (const auto& f : files) scenes.push_back(read_cloud(f.string()));
  return scenes;
}

// Runs config.training.steps steps from `state` (fresh or resumed). The
// callback sees every step's statistics.
// prepare_scene() of every scene when augmentation is off, else nothing.
inline std::vector<PreparedScene> prepare_training_scenes(const std::vector<PointCloud>& scenes,
                                                          const PipelineConfig& config) {
  std::vector<PreparedScene> out;
  if (config.training.augment) return out;
  for (const PointCloud& s : scenes) out.push_back(prepare_scene(s, config));
  return out;
}

inline void train(ModelState& state, const std::vector<PointCloud>& scenes, const PipelineConfig& config,
                  const std::function<void(const StepStats&)>& on_step = {}) {
  const std::vector<PreparedScene> prepared = prepare_training_scenes(scenes, config);
  for (std::uint64_t i = 0; i < config.training.steps; ++i) {
    const StepStats s = train_step(state, scenes, config, &prepared);
    if (on_step) on_step(s);
  }
}

inline ModelState cmd_train(const PipelineConfig& config, const fs::path& scene_dir, const fs::path& out_checkpoint,
                            const std::function<void(const StepStats&)>& on_step = {},
                            const fs::path& resume_from = {}) {
  const std::vector<PointCloud> scenes = load_scene_dir(scene_dir);
  ModelState state = resume_from.empty() ? init_model(config.model, config.seed) : load_checkpoint(resume_from.string());
  train(state, scenes, config, on_step);
  save_checkpoint(state, out_checkpoint.string());
  return state;
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

struct InstanceInfo {
  int id = 0;
  int semantic = 0;
  double confidence = 1.0;
  std::size_t voxels = 0;
};

struct Segmentation {
  PointCloud cloud;  // input positions and colors with predicted labels
  std::vector<InstanceInfo> instances;
};

inline int majority_class(const std::vector<int>& classes) {
  std::map<int, std::size_t> votes;
  for (int c : classes) ++votes[c];
  int best = -1;
  std::size_t best_n = 0;
  for (const auto& [c, n] : votes) {
    if (n > best_n) {
      best = c;
      best_n = n;
    }
  }
  return best;
}

inline Segmentation segment_cloud(const ModelState& state, const PipelineConfig& config, const PointCloud& cloud) {
  const PreparedScene ps = prepare_scene(cloud, config);
  const ForwardResult out = forward(state, ps.input);
  const std::vector<int> pred = argmax_rows(out.logits);

  std::vector<int> voxel_instance(ps.grid.size(), -1);
  std::vector<int> voxel_semantic = pred;
  Segmentation seg;

  // Foreground voxels, optionally split by predicted class.
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    if (!config.is_background(pred[v])) groups[config.cluster_per_class ? pred[v] : 0].push_back(v);
  }
  for (const auto& [key, rows] : groups) {
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), out.embeddings.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      pts.row(static_cast<Eigen::Index>(r)) = out.embeddings.row(static_cast<Eigen::Index>(rows[r]));
    }
    const ClusterResult cr = hdbscan(pts, config.cluster);
    const std::vector<double> conf = cluster_confidences(cr);
    std::vector<std::vector<int>> member_classes(cr.cluster_count());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (cr.labels[r] != kNoise) member_classes[static_cast<std::size_t>(cr.labels[r])].push_back(pred[rows[r]]);
    }
    const int base = static_cast<int>(seg.instances.size()) + 1;
    for (std::size_t c = 0; c < cr.cluster_count(); ++c) {
      seg.instances.push_back({base + static_cast<int>(c), majority_class(member_classes[c]), conf[c],
                               cr.member_count[c]});
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (cr.labels[r] == kNoise) continue;
      const InstanceInfo& info = seg.instances[static_cast<std::size_t>(base - 1 + cr.labels[r])];
      voxel_instance[rows[r]] = info.id;
      voxel_semantic[rows[r]] = info.semantic;
    }
  }

  const std::vector<int> inst = devoxelize(ps.grid, voxel_instance);
  const std::vector<int> sem = devoxelize(ps.grid, voxel_semantic);
  seg.cloud.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Point& p = seg.cloud[i];
    p.position = cloud[i].position;
    p.color = cloud[i].color;
    if (inst[i] >= 0) p.instance_id = inst[i];
    p.semantic_id = sem[i];
  }
  return seg;
}

inline constexpr std::string_view kInstancesMagic = "metricseg-instances v1";

// Sidecar listing each predicted instance: id, semantic class, confidence
// and voxel count, one per line.
inline std::string format_instances(const std::vector<InstanceInfo>& instances) {
  std::string out(kInstancesMagic);
  out += ' ' + std::to_string(instances.size()) + '\n';
  for (const InstanceInfo& i : instances) {
    out += std::to_string(i.id) + ' ' + std::to_string(i.semantic) + ' ';
    detail::append_double(out, i.confidence);
    out += ' ' + std::to_string(i.voxels) + '\n';
  }
  return out;
}

inline std::vector<InstanceInfo> parse_instances(std::string_view text, const std::string& origin) {
  std::vector<InstanceInfo> out;
  std::size_t line_no = 0;
  std::size_t declared = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    std::string_view line = text.substr(pos, e - pos);
    pos = e + 1;
    ++line_no;
    auto fail = [&](const std::string& what) { return ValidationError(origin + ":" + std::to_string(line_no) + ": " + what); };
    if (line_no == 1) {
      if (line.substr(0, kInstancesMagic.size()) != kInstancesMagic) throw fail("bad instances header");
      line.remove_prefix(kInstancesMagic.size());
      if (!detail::parse_number(detail::next_token(line), declared)) throw fail("bad instance count");
      continue;
    }
    if (line.empty()) continue;
    InstanceInfo info;
    if (!detail::parse_number(detail::next_token(line), info.id) ||
        !detail::parse_number(detail::next_token(line), info.semantic) ||
        !detail::parse_number(detail::next_token(line), info.confidence) ||
        !detail::parse_number(detail::next_token(line), info.voxels)) {
      throw fail("malformed instance line");
    }
    out.push_back(info);
  }
  if (line_no == 0) throw ValidationError(origin + ": empty instances file");
  if (out.size() != declared) throw ValidationError(origin + ": instance count does not match header");
  return out;
}

inline fs::path instances_path(const fs::path& cloud_path) {
  fs::path p = cloud_path;
  p += ".instances";
  return p;
}

inline Segmentation cmd_segment(const PipelineConfig& config, const fs::path& checkpoint, const fs::path& scene_file,
                                const fs::path& out_file) {
  const ModelState state = load_checkpoint(checkpoint.string());
  Segmentation seg = segment_cloud(state, config, read_cloud(scene_file.string()));
  write_cloud(out_file.string(), seg.cloud);
  write_text_file(instances_path(out_file).string(), format_instances(seg.instances));
  return seg;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalResult {
  APReport aggregate;
  std::vector<std::pair<std::string, APReport>> per_scene;
};

// Predicted instances of one scene. Confidences come from the sidecar when
// present and default to 1.
inline std::vector<PredictedInstance> load_predictions(const fs::path& path, std::size_t scene) {
  const PointCloud cloud = read_cloud(path.string());
  std::map<int, double> conf;
  const fs::path side = instances_path(path);
  if (fs::exists(side)) {
    for (const InstanceInfo& i : parse_instances(read_text_file(side.string()), side.string())) conf[i.id] = i.confidence;
  }
  return predicted_instances(cloud, scene, conf);
}

// Pairs prediction and ground-truth files by name. An empty prediction
// directory scores every scene as having no predictions; any other mismatch
// is an error.
inline EvalResult evaluate_dirs(const fs::path& pred_dir, const fs::path& gt_dir) {
  const auto gt_files = list_scene_files(gt_dir);
  const auto pred_files = list_scene_files(pred_dir);
  if (gt_files.empty()) throw ValidationError("no ground-truth scenes in " + gt_dir.string());
  std::map<std::string, fs::path> preds;
  for (const auto& p : pred_files) preds[p.filename().string()] = p;
  if (!preds.empty()) {
    std::string missing;
    std::map<std::string, bool> gt_names;
    for (const auto& g : gt_files) {
      gt_names[g.filename().string()] = true;
      if (!preds.count(g.filename().string())) missing += " " + g.filename().string() + " (no prediction)";
    }
    for (const auto& [name, p] : preds) {
      if (!gt_names.count(name)) missing += " " + name + " (no ground truth)";
    }
    if (!missing.empty()) throw ValidationError("unpaired files:" + missing);
  }

  EvalResult result;
  std::vector<PredictedInstance> all_preds;
  std::vector<GroundTruthInstance> all_gts;
  for (std::size_t s = 0; s < gt_files.size(); ++s) {
    const std::string name = gt_files[s].filename().string();
    std::vector<GroundTruthInstance> gts = ground_truth_instances(read_cloud(gt_files[s].string()), s);
    std::vector<PredictedInstance> ps;
    if (!preds.empty()) ps = load_predictions(preds[name], s);
    result.per_scene.emplace_back(name, ap_average(ps, gts));
    all_preds.insert(all_preds.end(), ps.begin(), ps.end());
    all_gts.insert(all_gts.end(), gts.begin(), gts.end());
  }
  result.aggregate = ap_average(all_preds, all_gts);
  return result;
}

inline EvalResult cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out_dir) {
  EvalResult r = evaluate_dirs(pred_dir, gt_dir);
  ensure_directory(out_dir);
  write_text_file((out_dir / "aggregate.txt").string(), format_report_table(r.aggregate));
  write_text_file((out_dir / "aggregate.kv").string(), format_report_kv(r.aggregate));
  for (const auto& [name, rep] : r.per_scene) {
    const std::string stem = fs::path(name).stem().string();
    write_text_file((out_dir / (stem + ".txt")).string(), format_report_table(rep));
    write_text_file((out_dir / (stem + ".kv")).string(), format_report_kv(rep));
  }
  return r;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct StageTiming {
  std::string stage;
  std::vector<double> seconds;  // one entry per run

  double mean() const {
    double s = 0.0;
    for (double v : seconds) s += v;
    return seconds.empty() ? 0.0 : s / static_cast<double>(seconds.size());
  }
  // Sample standard deviation; 0 for a single run.
  double stddev() const {
    if (seconds.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : seconds) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(seconds.size() - 1));
  }
};

inline const char* const kBenchStages[] = {"voxelization", "embedding", "clustering", "devoxelization"};

// Wall time of each pipeline stage summed over the scenes, per run.
inline std::vector<StageTiming> bench_stages(const ModelState& state, const PipelineConfig& config,
                                             const std::vector<PointCloud>& scenes, std::size_t runs) {
  using clock = std::chrono::steady_clock;
  std::vector<StageTiming> t;
  for (const char* name : kBenchStages) t.push_back({name, {}});
  auto seconds = [](clock::time_point a, clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };
  for (std::size_t run = 0; run < runs; ++run) {
    double acc[4] = {0, 0, 0, 0};
    for (const PointCloud& cloud : scenes) {
      const auto t0 = clock::now();
      const VoxelGrid grid = voxelize(cloud, config.voxel_size);
      const auto t1 = clock::now();
      const ForwardResult out = forward(state, input_matrix(featurize(grid, config.radius(), config.context_radii), config.shape_features));
      const std::vector<int> pred = argmax_rows(out.logits);
      const auto t2 = clock::now();
      std::vector<std::size_t> rows;
      for (std::size_t v = 0; v < pred.size(); ++v) {
        if (!config.is_background(pred[v])) rows.push_back(v);
      }
      Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), out.embeddings.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        pts.row(static_cast<Eigen::Index>(r)) = out.embeddings.row(static_cast<Eigen::Index>(rows[r]));
      }
      const ClusterResult cr = hdbscan(pts, config.cluster);
      std::vector<int> labels(grid.size(), -1);
      for (std::size_t r = 0; r < rows.size(); ++r) labels[rows[r]] = cr.labels[r];
      const auto t3 = clock::now();
      const std::vector<int> per_point = devoxelize(grid, labels);
      const auto t4 = clock::now();
      if (per_point.size() != cloud.size()) throw Error("bench: devoxelization size mismatch");
      acc[0] += seconds(t0, t1);
      acc[1] += seconds(t1, t2);
      acc[2] += seconds(t2, t3);
      acc[3] += seconds(t3, t4);
    }
    for (int s = 0; s < 4; ++s) t[static_cast<std::size_t>(s)].seconds.push_back(acc[s]);
  }
  return t;
}

inline std::string format_bench(const std::vector<StageTiming>& t, std::size_t scenes, std::size_t points) {
  std::string out = "scenes " + std::to_string(scenes) + " points " + std::to_string(points) + " runs " +
                    std::to_string(t.empty() ? 0 : t.front().seconds.size()) + "\n";
  out += "stage mean_s stddev_s\n";
  double total = 0.0;
  char buf[128];
  for (const StageTiming& s : t) {
    std::snprintf(buf, sizeof buf, "%s %.6f %.6f\n", s.stage.c_str(), s.mean(), s.stddev());
    out += buf;
    total += s.mean();
  }
  std::snprintf(buf, sizeof buf, "total %.6f\n", total);
  out += buf;
  return out;
}

// Generates config.bench_scenes scenes and times them. Without a checkpoint
// the model is freshly initialized, which exercises the same arithmetic.
inline std::string cmd_bench(const PipelineConfig& config, const fs::path& checkpoint = {}) {
  const ModelState state = checkpoint.empty() ? init_model(config.model, config.seed) : load_checkpoint(checkpoint.string());
  std::vector<PointCloud> scenes;
  std::size_t points = 0;
  for (std::size_t i = 0; i < config.bench_scenes; ++i) {
    scenes.push_back(generate_scene(scene_config_for(config, i)));
    points += scenes.back().size();
  }
  return format_bench(bench_stages(state, config, scenes, config.bench_runs), scenes.size(), points);
}

}  // namespace metricseg
