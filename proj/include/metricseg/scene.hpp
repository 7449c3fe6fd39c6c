#pragma once

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/point_cloud.hpp"

namespace metricseg {

// Reserved semantic ids. Objects use the archetype ids (2, 3, 4 by default).
inline constexpr int kFloorSemantic = 0;
inline constexpr int kWallSemantic = 1;

enum class Shape { kBox, kCylinder, kSphere };

// Archetype sizes are bounding-box extents (meters). A cylinder reads its
// diameter from x and its height from z; a sphere reads its diameter from x.
struct Archetype {
  Shape shape = Shape::kBox;
  Vec3 size_min = Vec3::Constant(0.3);
  Vec3 size_max = Vec3::Constant(0.6);
  int semantic_id = 2;
};

inline std::vector<Archetype> default_archetypes() {
  return {
      {Shape::kBox, Vec3(0.30, 0.30, 0.30), Vec3(0.70, 0.70, 0.80), 2},
      {Shape::kCylinder, Vec3(0.24, 0.24, 0.40), Vec3(0.50, 0.50, 0.90), 3},
      {Shape::kSphere, Vec3(0.36, 0.36, 0.36), Vec3(0.60, 0.60, 0.60), 4},
  };
}

struct SceneConfig {
  double room_extent = 2.5;  // square floor side, meters
  double wall_height = 1.2;
  int objects_min = 3;
  int objects_max = 5;
  std::vector<Archetype> archetypes = default_archetypes();
  double density = 190.0;  // points per m^2 of visible surface
  double contact_probability = 0.5;
  double position_noise = 0.005;  // sigma, meters
  double color_noise = 0.01;      // per-point shading sigma
  double min_color_distance = 0.35;
  double clearance = 0.10;       // gap between objects that are not in contact
  double wall_margin = 0.05;
  int max_placement_attempts = 200;
  std::uint64_t seed = 1;
};

inline void validate_scene_config(const SceneConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("scene config: ") + what);
  };
  require(c.room_extent > 0 && c.wall_height > 0, "extents must be > 0");
  require(c.objects_min >= 1 && c.objects_max >= c.objects_min, "object counts must be >= 1 and ordered");
  require(!c.archetypes.empty(), "at least one archetype required");
  for (const Archetype& a : c.archetypes) {
    require((a.size_min.array() > 0).all() && (a.size_max.array() >= a.size_min.array()).all(),
            "archetype size range invalid");
    require(a.semantic_id > kWallSemantic, "archetype semantic id collides with background ids");
  }
  require(c.density > 0, "density must be > 0");
  require(c.contact_probability >= 0 && c.contact_probability <= 1, "contact probability must be in [0,1]");
  require(c.position_noise >= 0 && c.color_noise >= 0, "noise must be >= 0");
  require(c.clearance > 0 && c.wall_margin >= 0, "clearances invalid");
  require(c.max_placement_attempts >= 1, "placement attempts must be >= 1");
}

// A placed object. `center` is the bounding-box center, `size` the
// axis-aligned extents before the yaw rotation about the vertical axis.
struct Primitive {
  Shape shape = Shape::kBox;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;
  int instance_id = 1;
  int semantic_id = 2;
  Vec3 color = Vec3::Constant(0.5);

  Vec3 to_local(const Vec3& p) const {
    const Vec3 d = p - center;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
  }
  Vec3 to_world(const Vec3& q) const {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return center + Vec3(c * q.x() - s * q.y(), s * q.x() + c * q.y(), q.z());
  }
  double bounding_radius() const { return 0.5 * size.norm(); }

  // Exact Euclidean distance to the surface outside the solid, negative inside.
  double signed_distance(const Vec3& p) const {
    const Vec3 q = to_local(p);
    switch (shape) {
      case Shape::kBox: {
        const Vec3 d = q.cwiseAbs() - 0.5 * size;
        return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
      }
      case Shape::kCylinder: {
        const double dr = std::hypot(q.x(), q.y()) - 0.5 * size.x();
        const double dz = std::abs(q.z()) - 0.5 * size.z();
        return std::min(std::max(dr, dz), 0.0) + std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      }
      case Shape::kSphere:
        return q.norm() - 0.5 * size.x();
    }
    return 0.0;
  }
};

namespace detail {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t count_for_area(double area, double density) {
  return static_cast<std::size_t>(std::llround(area * density));
}

// Samples the surface of a primitive uniformly at `density` points per m^2.
// With `closed` unset the face resting on the floor is skipped, since a
// scanner never sees it.
inline std::vector<Vec3> sample_surface(const Primitive& prim, double density, bool closed,
                                        std::mt19937_64& rng) {
  std::vector<Vec3> out;
  const Vec3 h = 0.5 * prim.size;
  switch (prim.shape) {
    case Shape::kBox: {
      // Face = (normal axis, sign).
      for (int axis = 0; axis < 3; ++axis) {
        for (int sign : {-1, 1}) {
          if (!closed && axis == 2 && sign < 0) continue;
          const int u = (axis + 1) % 3;
          const int v = (axis + 2) % 3;
          const double area = 4.0 * h[u] * h[v];
          const std::size_t n = count_for_area(area, density);
          for (std::size_t k = 0; k < n; ++k) {
            Vec3 q;
            q[axis] = sign * h[axis];
            q[u] = uniform(rng, -h[u], h[u]);
            q[v] = uniform(rng, -h[v], h[v]);
            out.push_back(prim.to_world(q));
          }
        }
      }
      break;
    }
    case Shape::kCylinder: {
      const double r = h.x();
      const std::size_t n_side = count_for_area(2.0 * std::numbers::pi * r * prim.size.z(), density);
      for (std::size_t k = 0; k < n_side; ++k) {
        const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        out.push_back(prim.to_world({r * std::cos(a), r * std::sin(a), uniform(rng, -h.z(), h.z())}));
      }
      const std::size_t n_cap = count_for_area(std::numbers::pi * r * r, density);
      for (double z : {h.z(), -h.z()}) {
        if (!closed && z < 0) continue;
        for (std::size_t k = 0; k < n_cap; ++k) {
          const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
          const double rr = r * std::sqrt(uniform(rng, 0.0, 1.0));
          out.push_back(prim.to_world({rr * std::cos(a), rr * std::sin(a), z}));
        }
      }
      break;
    }
    case Shape::kSphere: {
      const double r = h.x();
      const std::size_t n = count_for_area(4.0 * std::numbers::pi * r * r, density);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t k = 0; k < n; ++k) {
        Vec3 d(normal(rng), normal(rng), normal(rng));
        const double len = d.norm();
        if (len == 0.0) continue;
        out.push_back(prim.to_world(d * (r / len)));
      }
      break;
    }
  }
  return out;
}

// Approximate gap between two primitives: minimum over dense samples of b's
// surface of a's signed distance. Negative when they interpenetrate.
inline double surface_gap(const Primitive& a, const std::vector<Vec3>& b_samples) {
  double gap = std::numeric_limits<double>::infinity();
  for (const Vec3& s : b_samples) gap = std::min(gap, a.signed_distance(s));
  return gap;
}

inline constexpr double kGapSampleDensity = 1.0e4;  // ~1 cm spacing
inline constexpr int kLayoutAttempts = 20;

}  // namespace detail

struct Scene {
  PointCloud cloud;
  std::vector<Primitive> objects;
  bool has_contact = false;
};

// Builds a scene: floor on z=0 over [0,W]^2, walls on the x=0 and y=0 planes,
// and K objects resting on the floor. With probability contact_probability the
// second object is placed touching the first; every other pair keeps at least
// `clearance` between surfaces.
inline Scene generate_scene_with_layout(const SceneConfig& config) {
  validate_scene_config(config);
  std::mt19937_64 rng(config.seed);
  const double W = config.room_extent;

  Scene scene;
  const int count = std::uniform_int_distribution<int>(config.objects_min, config.objects_max)(rng);
  const bool want_contact = detail::uniform(rng, 0.0, 1.0) < config.contact_probability && count >= 2;

  const Vec3 floor_color = Vec3(0.55, 0.45, 0.35) + Vec3(detail::uniform(rng, -0.1, 0.1),
                                                         detail::uniform(rng, -0.1, 0.1),
                                                         detail::uniform(rng, -0.1, 0.1));
  const Vec3 wall_color = Vec3(0.80, 0.80, 0.75) + Vec3::Constant(detail::uniform(rng, -0.05, 0.05));

  // A layout that cannot be completed is discarded and redrawn as a whole;
  // a contact pair anchored in a corner can leave no room for the rest.
  auto try_layout = [&]() -> bool {
    scene.objects.clear();
    for (int k = 0; k < count; ++k) {
      const Archetype& arch =
          config.archetypes[std::uniform_int_distribution<std::size_t>(0, config.archetypes.size() - 1)(rng)];
      Primitive prim;
      prim.shape = arch.shape;
      prim.semantic_id = arch.semantic_id;
      prim.instance_id = k + 1;
      for (int a = 0; a < 3; ++a) prim.size[a] = detail::uniform(rng, arch.size_min[a], arch.size_max[a]);
      if (prim.shape != Shape::kBox) prim.size.y() = prim.size.x();
      if (prim.shape == Shape::kSphere) prim.size.z() = prim.size.x();
      prim.yaw = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);

      // Colors are kept mutually distinct within a scene.
      for (int attempt = 0; attempt < 64; ++attempt) {
        prim.color = Vec3(detail::uniform(rng, 0.05, 0.95), detail::uniform(rng, 0.05, 0.95),
                          detail::uniform(rng, 0.05, 0.95));
        bool ok = (prim.color - floor_color).norm() >= 0.5 * config.min_color_distance &&
                  (prim.color - wall_color).norm() >= 0.5 * config.min_color_distance;
        for (const Primitive& other : scene.objects) {
          ok = ok && (prim.color - other.color).norm() >= config.min_color_distance;
        }
        if (ok) break;
      }

      // Local-frame samples for gap tests; translated per candidate position.
      Primitive origin = prim;
      origin.center = Vec3(0, 0, 0.5 * prim.size.z());
      const std::vector<Vec3> local = detail::sample_surface(origin, detail::kGapSampleDensity, true, rng);
      const double reach = prim.bounding_radius();
      auto samples_at = [&](const Vec3& c) {
        std::vector<Vec3> s(local.size());
        const Vec3 shift = c - origin.center;
        for (std::size_t i = 0; i < local.size(); ++i) s[i] = local[i] + shift;
        return s;
      };
      auto inside_room = [&](const Vec3& c) {
        const double m = reach + config.wall_margin;
        return c.x() >= m && c.x() <= W - m && c.y() >= m && c.y() <= W - m;
      };
      auto clear_of_others = [&](const Vec3& c, const std::vector<Vec3>& s, int skip) {
        for (std::size_t o = 0; o < scene.objects.size(); ++o) {
          if (static_cast<int>(o) == skip) continue;
          const Primitive& other = scene.objects[o];
          if ((other.center - c).norm() > other.bounding_radius() + reach + config.clearance) continue;
          if (detail::surface_gap(other, s) < config.clearance) return false;
        }
        return true;
      };

      bool placed = false;
      for (int attempt = 0; attempt < config.max_placement_attempts && !placed; ++attempt) {
        if (k == 1 && want_contact) {
          const Primitive& anchor = scene.objects[0];
          const double theta = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
          const Vec3 dir(std::cos(theta), std::sin(theta), 0.0);
          auto center_at = [&](double t) {
            Vec3 c = anchor.center + t * dir;
            c.z() = 0.5 * prim.size.z();
            return c;
          };
          // gap(t) is positive at t_hi and negative at t=0; bisect the crossing.
          double lo = 0.0;
          double hi = anchor.bounding_radius() + reach + 0.01;
          for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (detail::surface_gap(anchor, samples_at(center_at(mid))) > 0.0) {
              hi = mid;
            } else {
              lo = mid;
            }
          }
          const Vec3 c = center_at(hi);
          if (!inside_room(c)) continue;
          if (!clear_of_others(c, samples_at(c), 0)) continue;
          prim.center = c;
          placed = true;
        } else {
          const double m = reach + config.wall_margin;
          if (W - 2 * m <= 0) break;
          const Vec3 c(detail::uniform(rng, m, W - m), detail::uniform(rng, m, W - m), 0.5 * prim.size.z());
          if (!clear_of_others(c, samples_at(c), -1)) continue;
          prim.center = c;
          placed = true;
        }
      }
      if (!placed) return false;
      scene.objects.push_back(prim);
    }
    return true;
  };
  bool laid_out = false;
  for (int layout = 0; layout < detail::kLayoutAttempts && !laid_out; ++layout) laid_out = try_layout();
  if (!laid_out) {
    throw ValidationError("scene generation: could not place " + std::to_string(count) + " objects after " +
                          std::to_string(detail::kLayoutAttempts) + " layouts of " +
                          std::to_string(config.max_placement_attempts) + " attempts each");
  }
  scene.has_contact = want_contact;

  std::normal_distribution<double> pos_noise(0.0, 1.0);
  std::normal_distribution<double> col_noise(0.0, 1.0);
  auto emit = [&](const Vec3& p, const Vec3& color, std::optional<int> inst, int sem) {
    Point pt;
    pt.position = p;
    if (config.position_noise > 0) {
      for (int a = 0; a < 3; ++a) pt.position[a] += config.position_noise * pos_noise(rng);
    }
    pt.color = color;
    if (config.color_noise > 0) {
      for (int a = 0; a < 3; ++a) pt.color[a] += config.color_noise * col_noise(rng);
    }
    pt.color = pt.color.cwiseMax(0.0).cwiseMin(1.0);
    pt.instance_id = inst;
    pt.semantic_id = sem;
    scene.cloud.push_back(pt);
  };

  // Floor and walls.
  const std::size_t n_floor = detail::count_for_area(W * W, config.density);
  for (std::size_t i = 0; i < n_floor; ++i) {
    emit({detail::uniform(rng, 0, W), detail::uniform(rng, 0, W), 0.0}, floor_color, std::nullopt,
         kFloorSemantic);
  }
  const std::size_t n_wall = detail::count_for_area(W * config.wall_height, config.density);
  for (int wall = 0; wall < 2; ++wall) {
    for (std::size_t i = 0; i < n_wall; ++i) {
      const double u = detail::uniform(rng, 0, W);
      const double z = detail::uniform(rng, 0, config.wall_height);
      emit(wall == 0 ? Vec3(0.0, u, z) : Vec3(u, 0.0, z), wall_color, std::nullopt, kWallSemantic);
    }
  }
  for (const Primitive& prim : scene.objects) {
    for (const Vec3& p : detail::sample_surface(prim, config.density, false, rng)) {
      emit(p, prim.color, prim.instance_id, prim.semantic_id);
    }
  }
  return scene;
}

inline PointCloud generate_scene(const SceneConfig& config) { return generate_scene_with_layout(config).cloud; }

// ---------------------------------------------------------------------------
// Training-time augmentation.
// ---------------------------------------------------------------------------

struct AugmentParams {
  double color_sigma = 0.03;
  double scale_min = 0.8;
  double scale_max = 1.2;
  bool rotate_z = true;            // uniform in [0, 2pi)
  double x_rotation_sigma_deg = 5.0;
  double x_rotation_max_deg = 10.0;  // samples are clipped, not rejected
};

// Gaussian tilt about the x axis in degrees, clipped to +-max.
inline double sample_x_rotation_deg(std::mt19937_64& rng, const AugmentParams& params) {
  if (params.x_rotation_sigma_deg <= 0) return 0.0;
  const double a = std::normal_distribution<double>(0.0, params.x_rotation_sigma_deg)(rng);
  return std::clamp(a, -params.x_rotation_max_deg, params.x_rotation_max_deg);
}

struct AugmentTransform {
  double scale = 1.0;
  double z_angle = 0.0;  // radians
  double x_angle = 0.0;  // radians

  Eigen::Matrix3d matrix() const {
    const Eigen::Matrix3d rz = Eigen::AngleAxisd(z_angle, Vec3::UnitZ()).toRotationMatrix();
    const Eigen::Matrix3d rx = Eigen::AngleAxisd(x_angle, Vec3::UnitX()).toRotationMatrix();
    return scale * rx * rz;
  }
};

inline PointCloud augment(const PointCloud& cloud, std::uint64_t seed, const AugmentParams& params = {},
                          AugmentTransform* applied = nullptr) {
  if (cloud.empty()) throw ValidationError("augment: empty input");
  std::mt19937_64 rng(seed);
  AugmentTransform t;
  t.scale = params.scale_max > params.scale_min ? detail::uniform(rng, params.scale_min, params.scale_max)
                                                : params.scale_min;
  t.z_angle = params.rotate_z ? detail::uniform(rng, 0.0, 2.0 * std::numbers::pi) : 0.0;
  t.x_angle = sample_x_rotation_deg(rng, params) * std::numbers::pi / 180.0;
  if (applied) *applied = t;

  const Eigen::Matrix3d m = t.matrix();
  std::normal_distribution<double> jitter(0.0, 1.0);
  PointCloud out = cloud;
  for (Point& p : out) {
    p.position = m * p.position;
    if (params.color_sigma > 0) {
      for (int c = 0; c < 3; ++c) p.color[c] += params.color_sigma * jitter(rng);
      p.color = p.color.cwiseMax(0.0).cwiseMin(1.0);
    }
  }
  return out;
}

}  // namespace metricseg
