#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/hdbscan.hpp"
#include "metricseg/loss.hpp"
#include "metricseg/model.hpp"
#include "metricseg/point_cloud.hpp"
#include "metricseg/scene.hpp"

namespace metricseg {

struct TrainingConfig {
  std::uint64_t steps = 5000;
  std::size_t batch_size = 8;
  double base_lr = 1e-4;
  double lr_decay = 0.8;
  std::uint64_t lr_decay_every = 10000;
  double semantic_weight = 1.0;
  bool augment = true;
  std::size_t voxels_per_scene = 0;  // 0 keeps every voxel
  std::uint64_t log_every = 100;
};

struct PipelineConfig {
  double voxel_size = 0.02;
  double feature_radius = 0.0;  // 0 means 6 x voxel_size
  bool shape_features = false;
  std::vector<double> context_radii;  // meters, extra neighborhoods
  LossParams loss;
  ModelConfig model;
  TrainingConfig training;
  ClusterParams cluster;
  bool cluster_per_class = false;
  SceneConfig scene;
  AugmentParams augment;
  std::vector<int> background_ids = {kFloorSemantic, kWallSemantic};
  std::uint64_t seed = 1;
  std::size_t bench_runs = 5;
  std::size_t bench_scenes = 4;

  double radius() const { return feature_radius > 0 ? feature_radius : 6.0 * voxel_size; }
  int input_width() const { return feature_width(shape_features, context_radii.size()); }
  bool is_background(int semantic) const {
    for (int b : background_ids) {
      if (b == semantic) return true;
    }
    return false;
  }

  void validate() const {
    if (!(voxel_size > 0)) throw ValidationError("config: voxel_size must be > 0");
    if (feature_radius < 0) throw ValidationError("config: feature_radius must be >= 0");
    for (double r : context_radii) {
      if (!(r > 0)) throw ValidationError("config: context_radii must be > 0");
    }
    if (model.input_width != input_width()) {
      throw ValidationError("config: model input width " + std::to_string(model.input_width) + " does not match features (" +
                            std::to_string(input_width()) + ")");
    }
    loss.validate();
    model.validate();
    cluster.validate();
    validate_scene_config(scene);
    if (training.batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (!(training.base_lr > 0)) throw ValidationError("config: lr must be > 0");
    if (training.lr_decay_every < 1) throw ValidationError("config: lr_decay_every must be >= 1");
    if (bench_runs < 1 || bench_scenes < 1) throw ValidationError("config: bench counts must be >= 1");
    for (const Archetype& a : scene.archetypes) {
      if (a.semantic_id >= model.num_classes) {
        throw ValidationError("config: archetype semantic id " + std::to_string(a.semantic_id) +
                              " exceeds num_classes");
      }
    }
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = v.find(',', start);
    out.push_back(trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& v) {
  T out{};
  if (!parse_number(v, out)) throw ValidationError("config: bad value '" + v + "' for " + key);
  return out;
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ValidationError("config: bad boolean '" + v + "' for " + key);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  for (const std::string& item : split_list(v)) out.push_back(parse_value<T>(key, item));
  return out;
}

inline Vec3 parse_vec3(const std::string& key, const std::string& v) {
  const auto items = parse_list<double>(key, v);
  if (items.size() != 3) throw ValidationError("config: " + key + " needs 3 comma-separated values");
  return {items[0], items[1], items[2]};
}

}  // namespace detail

// Flat "key = value" text. '#' starts a comment; blank lines are ignored;
// unknown or repeated keys are errors. Every key has a default.
inline PipelineConfig parse_config(std::string_view text, const std::string& origin = "<config>") {
  PipelineConfig c;
  using detail::parse_value;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;
  auto real = [&](const char* key, double& dst) {
    setters[key] = [&dst](const std::string& k, const std::string& v) { dst = parse_value<double>(k, v); };
  };
  auto size = [&](const char* key, std::size_t& dst) {
    setters[key] = [&dst](const std::string& k, const std::string& v) { dst = parse_value<std::size_t>(k, v); };
  };
  auto u64 = [&](const char* key, std::uint64_t& dst) {
    setters[key] = [&dst](const std::string& k, const std::string& v) { dst = parse_value<std::uint64_t>(k, v); };
  };
  auto integer = [&](const char* key, int& dst) {
    setters[key] = [&dst](const std::string& k, const std::string& v) { dst = parse_value<int>(k, v); };
  };
  auto flag = [&](const char* key, bool& dst) {
    setters[key] = [&dst](const std::string& k, const std::string& v) { dst = parse_value<bool>(k, v); };
  };

  real("voxel_size", c.voxel_size);
  real("feature_radius", c.feature_radius);
  flag("shape_features", c.shape_features);
  setters["context_radii"] = [&c](const std::string& k, const std::string& v) {
    c.context_radii = v.empty() ? std::vector<double>{} : detail::parse_list<double>(k, v);
  };
  real("delta_inter", c.loss.delta_inter);
  real("delta_intra", c.loss.delta_intra);
  real("gamma_intra", c.loss.gamma_intra);
  real("p", c.loss.p);
  setters["hidden_widths"] = [&c](const std::string& k, const std::string& v) {
    c.model.hidden_widths = detail::parse_list<int>(k, v);
  };
  integer("embed_dim", c.model.embed_dim);
  integer("num_classes", c.model.num_classes);
  flag("separate_semantic_net", c.model.separate_semantic_net);
  u64("steps", c.training.steps);
  size("batch_size", c.training.batch_size);
  size("voxels_per_scene", c.training.voxels_per_scene);
  real("lr", c.training.base_lr);
  real("lr_decay", c.training.lr_decay);
  u64("lr_decay_every", c.training.lr_decay_every);
  real("semantic_weight", c.training.semantic_weight);
  flag("augment", c.training.augment);
  u64("log_every", c.training.log_every);
  size("min_cluster_size", c.cluster.min_cluster_size);
  size("min_samples", c.cluster.min_samples);
  real("dbscan_eps", c.cluster.dbscan_eps);
  flag("cluster_per_class", c.cluster_per_class);
  setters["background_ids"] = [&c](const std::string& k, const std::string& v) {
    c.background_ids = detail::parse_list<int>(k, v);
  };
  u64("seed", c.seed);
  size("bench_runs", c.bench_runs);
  size("bench_scenes", c.bench_scenes);

  real("room_extent", c.scene.room_extent);
  real("wall_height", c.scene.wall_height);
  integer("objects_min", c.scene.objects_min);
  integer("objects_max", c.scene.objects_max);
  real("density", c.scene.density);
  real("contact_probability", c.scene.contact_probability);
  real("position_noise", c.scene.position_noise);
  real("color_noise", c.scene.color_noise);
  real("min_color_distance", c.scene.min_color_distance);
  real("clearance", c.scene.clearance);
  real("wall_margin", c.scene.wall_margin);
  integer("max_placement_attempts", c.scene.max_placement_attempts);
  const char* shape_names[] = {"box", "cylinder", "sphere"};
  for (std::size_t a = 0; a < c.scene.archetypes.size(); ++a) {
    Archetype& arch = c.scene.archetypes[a];
    const std::string base = shape_names[a];
    setters[base + "_size_min"] = [&arch](const std::string& k, const std::string& v) {
      arch.size_min = detail::parse_vec3(k, v);
    };
    setters[base + "_size_max"] = [&arch](const std::string& k, const std::string& v) {
      arch.size_max = detail::parse_vec3(k, v);
    };
    setters[base + "_semantic"] = [&arch](const std::string& k, const std::string& v) {
      arch.semantic_id = parse_value<int>(k, v);
    };
  }

  real("color_jitter", c.augment.color_sigma);
  real("scale_min", c.augment.scale_min);
  real("scale_max", c.augment.scale_max);
  flag("rotate_z", c.augment.rotate_z);
  real("x_rotation_sigma_deg", c.augment.x_rotation_sigma_deg);
  real("x_rotation_max_deg", c.augment.x_rotation_max_deg);

  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    std::string_view line = text.substr(pos, e - pos);
    pos = e + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError(where + "unknown key '" + key + "'");
    if (seen.count(key)) throw ValidationError(where + "key '" + key + "' repeated");
    seen[key] = line_no;
    try {
      it->second(key, value);
    } catch (const ValidationError& err) {
      throw ValidationError(where + err.what());
    }
  }
  c.scene.seed = c.seed;
  c.model.input_width = c.input_width();
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) { return parse_config(read_text_file(path), path); }

}  // namespace metricseg
