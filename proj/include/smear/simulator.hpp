#pragma once

// Synthetic depth sequences: analytic ray casting of planes, spheres and
// boxes along a known trajectory, with smeared points injected across depth
// discontinuities as convex interpolations between foreground and background.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "smear/core/types.hpp"
#include "smear/io/dataset.hpp"
#include "smear/parallel.hpp"

namespace smear::sim {

struct Primitive {
  enum class Kind { Plane, Sphere, Box };

  Kind kind = Kind::Plane;
  /// Primitive-to-world transform. Planes lie in their local z = 0 plane.
  RigidPose pose;
  /// Plane: half-extents along local x, y (0 = unbounded). Sphere: radius in
  /// x. Box: half-extents along local x, y, z.
  Eigen::Vector3d size = Eigen::Vector3d::Zero();

  static Primitive plane(const Eigen::Vector3d& center, const Eigen::Vector3d& normal, double half_x,
                         double half_y) {
    Primitive p;
    p.kind = Kind::Plane;
    p.pose.rotation = Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitZ(), normal.normalized())
                          .toRotationMatrix();
    p.pose.translation = center;
    p.size = {half_x, half_y, 0.0};
    return p;
  }

  static Primitive sphere(const Eigen::Vector3d& center, double radius) {
    Primitive p;
    p.kind = Kind::Sphere;
    p.pose.translation = center;
    p.size = {radius, 0.0, 0.0};
    return p;
  }

  static Primitive box(const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents) {
    Primitive p;
    p.kind = Kind::Box;
    p.pose.translation = center;
    p.size = half_extents;
    return p;
  }

  /// Smallest ray parameter t > 0 with origin + t * dir on the surface.
  std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const {
    const RigidPose inv = pose.inverse();
    const Eigen::Vector3d o = inv * origin;
    const Eigen::Vector3d d = inv.rotation * dir;
    constexpr double kMin = 1e-9;
    switch (kind) {
      case Kind::Plane: {
        if (std::abs(d.z()) < 1e-15) return std::nullopt;
        const double t = -o.z() / d.z();
        if (!(t > kMin)) return std::nullopt;
        const Eigen::Vector3d hit = o + t * d;
        if (size.x() > 0.0 && std::abs(hit.x()) > size.x()) return std::nullopt;
        if (size.y() > 0.0 && std::abs(hit.y()) > size.y()) return std::nullopt;
        return t;
      }
      case Kind::Sphere: {
        const double r = size.x();
        const double a = d.squaredNorm();
        const double b = 2.0 * o.dot(d);
        const double c = o.squaredNorm() - r * r;
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) return std::nullopt;
        const double sq = std::sqrt(disc);
        const double t0 = (-b - sq) / (2.0 * a);
        const double t1 = (-b + sq) / (2.0 * a);
        if (t0 > kMin) return t0;
        if (t1 > kMin) return t1;
        return std::nullopt;
      }
      case Kind::Box: {
        double tmin = -std::numeric_limits<double>::infinity();
        double tmax = std::numeric_limits<double>::infinity();
        for (int i = 0; i < 3; ++i) {
          if (std::abs(d[i]) < 1e-15) {
            if (std::abs(o[i]) > size[i]) return std::nullopt;
            continue;
          }
          double ta = (-size[i] - o[i]) / d[i];
          double tb = (size[i] - o[i]) / d[i];
          if (ta > tb) std::swap(ta, tb);
          tmin = std::max(tmin, ta);
          tmax = std::min(tmax, tb);
        }
        if (tmin > tmax) return std::nullopt;
        if (tmin > kMin) return tmin;
        if (tmax > kMin) return tmax;
        return std::nullopt;
      }
    }
    return std::nullopt;
  }
};

struct SmearModel {
  /// Pixels within this Chebyshev distance of a discontinuity form the band.
  int edge_band_px = 1;
  /// Probability that a band pixel is smeared.
  double rate = 0.5;
  /// Interpolation weight of the foreground, lambda ~ U(lambda_min, lambda_max).
  double lambda_min = 0.0;
  double lambda_max = 1.0;
  /// A depth jump between 4-neighbors counts as a discontinuity when it
  /// exceeds both discontinuity_mm and discontinuity_relative * depth (the
  /// relative part keeps steeply slanted surfaces from reading as edges).
  double discontinuity_mm = 15.0;
  double discontinuity_relative = 0.05;
  /// Draws landing within this distance of the pixel's true depth lie on a
  /// real surface within sensor noise and are not injected.
  double min_displacement_mm = 10.0;

  double jump_threshold(double depth_mm) const {
    return std::max(discontinuity_mm, discontinuity_relative * depth_mm);
  }
};

struct SyntheticScene {
  CameraModel camera;
  std::vector<Primitive> primitives;
  std::vector<RigidPose> trajectory;
  double noise_sigma_mm = 0.0;
  SmearModel smear;
  std::uint64_t seed = 1;
  /// Returns farther than this are dropped (0 = unlimited).
  double max_range_mm = 0.0;

  void validate() const {
    camera.validate();
    if (primitives.empty()) throw ConfigError("scene: at least one primitive required");
    if (trajectory.size() < 2) throw ConfigError("scene: at least two trajectory poses required");
    if (!(noise_sigma_mm >= 0.0)) throw ConfigError("scene: noise sigma must be non-negative");
    if (!(smear.rate >= 0.0 && smear.rate <= 1.0)) throw ConfigError("scene: smear rate must lie in [0,1]");
    if (!(smear.lambda_min >= 0.0 && smear.lambda_max <= 1.0 && smear.lambda_min <= smear.lambda_max))
      throw ConfigError("scene: lambda range must lie within [0,1]");
    if (smear.edge_band_px < 0) throw ConfigError("scene: edge band must be non-negative");
    if (!(smear.discontinuity_mm > 0.0) || smear.discontinuity_relative < 0.0)
      throw ConfigError("scene: discontinuity thresholds must be positive");
    if (smear.min_displacement_mm < 0.0) throw ConfigError("scene: minimum displacement must be non-negative");
    for (const auto& p : trajectory)
      if (!p.is_valid(1e-6)) throw ConfigError("scene: trajectory pose is not rigid");
    for (const auto& p : primitives) {
      if (p.kind == Primitive::Kind::Sphere && !(p.size.x() > 0.0)) throw ConfigError("scene: sphere radius must be positive");
      if (p.kind == Primitive::Kind::Box && !(p.size.minCoeff() > 0.0)) throw ConfigError("scene: box extents must be positive");
    }
  }
};

/// Output of render_scene: frames carry the true poses.
struct SimulatedSequence {
  SceneSequence sequence;
  /// Per frame: 1 where a smeared point was injected.
  std::vector<MaskRaster> smear_mask;
  /// Per frame: 1 within the edge band (where smear may be injected).
  std::vector<MaskRaster> edge_band;
  /// Per frame ternary ground truth: 0 no return, 1 valid, 2 smeared.
  std::vector<MaskRaster> ground_truth;
  std::vector<RigidPose> true_poses;
};

// Trajectories -----------------------------------------------------------------

/// Camera-to-world pose at `position` looking at `target`, image y pointing
/// along world +y as much as possible.
inline RigidPose look_at(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d z = (target - position).normalized();
  Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Eigen::Vector3d::UnitX();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  RigidPose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = position;
  return pose;
}

struct ArcTrajectory {
  Eigen::Vector3d center{0.0, 0.0, 1500.0};
  double radius_mm = 1500.0;
  double start_deg = -21.75;
  double step_deg = 1.5;
  int frames = 30;
  /// Vertical oscillation of the camera, one full period over the arc.
  double bob_mm = 50.0;

  std::vector<RigidPose> poses() const {
    std::vector<RigidPose> out;
    out.reserve(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i) {
      const double a = (start_deg + step_deg * i) * std::numbers::pi / 180.0;
      const double y = bob_mm * std::sin(2.0 * std::numbers::pi * i / std::max(frames, 1));
      const Eigen::Vector3d pos = center + Eigen::Vector3d(radius_mm * std::sin(a), y, -radius_mm * std::cos(a));
      out.push_back(look_at(pos, center));
    }
    return out;
  }
};

inline CameraModel default_camera() { return CameraModel{300.0, 300.0, 159.5, 119.5, 320, 240}; }

/// Box over a floor in front of a back wall and a side wall, with a sphere,
/// viewed along an arc.
/// Returns past the wall edges are empty.
inline SyntheticScene default_scene(std::uint64_t seed = 1, int frames = 30) {
  SyntheticScene s;
  s.camera = default_camera();
  s.primitives = {
      Primitive::plane({0.0, 0.0, 3000.0}, {0.0, 0.0, -1.0}, 1400.0, 1000.0),
      Primitive::plane({0.0, 600.0, 1700.0}, {0.0, -1.0, 0.0}, 1400.0, 1300.0),
      Primitive::box({-150.0, 350.0, 1300.0}, {250.0, 250.0, 200.0}),
      Primitive::sphere({450.0, 380.0, 1900.0}, 220.0),
      Primitive::plane({1300.0, 0.0, 2000.0}, {-1.0, 0.0, 0.0}, 1000.0, 1000.0),
  };
  ArcTrajectory arc;
  arc.frames = frames;
  arc.start_deg = -arc.step_deg * (frames - 1) / 2.0;
  s.trajectory = arc.poses();
  s.noise_sigma_mm = 1.0;
  s.smear = SmearModel{};
  s.seed = seed;
  return s;
}

/// Seeded variation of the default scene: object placement, arc radius,
/// start angle and step (inter-frame motion stays below 5 deg and 50 mm).
inline SyntheticScene random_scene(std::uint64_t seed, int frames = 30) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + 17);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SyntheticScene s = default_scene(seed, frames);
  const double box_x = uni(-450.0, 150.0);
  const double box_z = uni(1100.0, 1500.0);
  const Eigen::Vector3d half(uni(150.0, 300.0), uni(150.0, 300.0), uni(120.0, 250.0));
  s.primitives[2] = Primitive::box({box_x, 600.0 - half.y(), box_z}, half);
  const double r = uni(150.0, 260.0);
  s.primitives[3] = Primitive::sphere({uni(250.0, 650.0), 600.0 - r, uni(1700.0, 2300.0)}, r);
  s.primitives[4] = Primitive::plane({uni(1100.0, 1500.0), 0.0, 2000.0}, {-1.0, 0.0, 0.0}, 1000.0, 1000.0);
  ArcTrajectory arc;
  arc.frames = frames;
  arc.radius_mm = uni(1300.0, 1700.0);
  const double step_draw = uni(0.0, 1.0);
  arc.start_deg = uni(-25.0, -5.0);
  // Vertical change per frame stays within 30 mm; the arc chord takes the rest of 49 mm.
  arc.bob_mm = std::min(uni(0.0, 80.0), 15.0 / std::sin(std::numbers::pi / std::max(frames, 2)));
  const double chord = std::sqrt(49.0 * 49.0 - 30.0 * 30.0);
  const double max_step = std::min(1.8, 2.0 * std::asin(chord / (2.0 * arc.radius_mm)) * 180.0 / std::numbers::pi);
  arc.step_deg = 1.0 + step_draw * (max_step - 1.0);
  s.trajectory = arc.poses();
  return s;
}

// Rendering ----------------------------------------------------------------------

/// Exact depth (camera z, mm) seen from `pose`; 0 where the ray hits nothing.
inline Raster<double> raycast_depth(const SyntheticScene& scene, const RigidPose& pose) {
  const CameraModel& cam = scene.camera;
  Raster<double> depth(cam.width, cam.height, 0.0);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      // With ray z = 1 in the camera frame the ray parameter equals depth.
      const Eigen::Vector3d dir = pose.rotation * cam.ray(u, v);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& prim : scene.primitives)
        if (auto t = prim.intersect(pose.translation, dir); t && *t < best) best = *t;
      if (std::isfinite(best) && (scene.max_range_mm <= 0.0 || best <= scene.max_range_mm)) depth(u, v) = best;
    }
  }
  return depth;
}

/// Pixels with a 4-neighbor across a depth discontinuity.
inline MaskRaster discontinuity_pixels(const Raster<double>& depth, const SmearModel& model) {
  MaskRaster edge(depth.width(), depth.height(), 0);
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const double d = depth(u, v);
      if (d <= 0.0) continue;
      constexpr int du[4] = {1, -1, 0, 0};
      constexpr int dv[4] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        const int nu = u + du[k], nv = v + dv[k];
        if (!depth.contains(nu, nv)) continue;
        const double dn = depth(nu, nv);
        if (dn > 0.0 && std::abs(dn - d) > model.jump_threshold(std::min(d, dn))) {
          edge(u, v) = 1;
          break;
        }
      }
    }
  }
  return edge;
}

/// Valid pixels within Chebyshev distance `radius` of an edge pixel.
inline MaskRaster dilate_band(const MaskRaster& edge, const Raster<double>& depth, int radius) {
  MaskRaster band(edge.width(), edge.height(), 0);
  for (int v = 0; v < edge.height(); ++v) {
    for (int u = 0; u < edge.width(); ++u) {
      if (!edge(u, v)) continue;
      for (int dv = -radius; dv <= radius; ++dv)
        for (int du = -radius; du <= radius; ++du)
          if (edge.contains(u + du, v + dv) && depth(u + du, v + dv) > 0.0) band(u + du, v + dv) = 1;
    }
  }
  return band;
}

namespace detail {

inline std::mt19937_64 frame_rng(std::uint64_t seed, std::size_t frame) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame), 0x5eedu};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Renders every trajectory pose; deterministic given scene.seed.
inline SimulatedSequence render_scene(const SyntheticScene& scene, unsigned jobs = 1) {
  scene.validate();
  const std::size_t n = scene.trajectory.size();
  SimulatedSequence out;
  out.sequence.frames.resize(n);
  out.smear_mask.resize(n);
  out.edge_band.resize(n);
  out.ground_truth.resize(n);
  out.true_poses = scene.trajectory;
  out.sequence.manifest = {{"sensor", "synthetic"}, {"scene", "simulated"}};

  parallel_for(n, jobs, [&](std::size_t i) {
    const CameraModel& cam = scene.camera;
    Raster<double> depth = raycast_depth(scene, scene.trajectory[i]);
    const MaskRaster edges = discontinuity_pixels(depth, scene.smear);
    const MaskRaster band = dilate_band(edges, depth, scene.smear.edge_band_px);
    MaskRaster mask(cam.width, cam.height, 0);

    auto rng = detail::frame_rng(scene.seed, i);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_real_distribution<double> lambda_dist(scene.smear.lambda_min, scene.smear.lambda_max);
    std::normal_distribution<double> noise(0.0, 1.0);

    // Smear is decided on the clean depth so neighbors never see injected values.
    const Raster<double> clean = depth;
    const int reach = scene.smear.edge_band_px + 1;
    for (int v = 0; v < cam.height; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        if (!band(u, v)) continue;
        const double draw = coin(rng);
        const double lambda = lambda_dist(rng);
        if (draw >= scene.smear.rate) continue;
        double fg = std::numeric_limits<double>::infinity(), bg = 0.0;
        for (int dv = -reach; dv <= reach; ++dv)
          for (int du = -reach; du <= reach; ++du) {
            if (!clean.contains(u + du, v + dv)) continue;
            const double d = clean(u + du, v + dv);
            if (d <= 0.0) continue;
            fg = std::min(fg, d);
            bg = std::max(bg, d);
          }
        if (!(bg - fg > scene.smear.jump_threshold(fg))) continue;
        const double smeared = lambda * fg + (1.0 - lambda) * bg;
        if (std::abs(smeared - clean(u, v)) <= scene.smear.min_displacement_mm) continue;
        depth(u, v) = smeared;
        mask(u, v) = 1;
      }
    }

    DepthFrame& frame = out.sequence.frames[i];
    frame.frame_id = static_cast<int>(i);
    frame.camera = cam;
    frame.pose = scene.trajectory[i];
    frame.depth = DepthRaster(cam.width, cam.height, 0);
    MaskRaster gt(cam.width, cam.height, 0);
    for (int v = 0; v < cam.height; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        double d = depth(u, v);
        if (d <= 0.0) continue;
        if (scene.noise_sigma_mm > 0.0) d += scene.noise_sigma_mm * noise(rng);
        const long q = std::lround(d);
        if (q <= 0 || q > 65535) {
          mask(u, v) = 0;
          continue;
        }
        frame.depth(u, v) = static_cast<std::uint16_t>(q);
        gt(u, v) = mask(u, v) ? 2 : 1;
      }
    }
    out.smear_mask[i] = std::move(mask);
    out.edge_band[i] = band;
    out.ground_truth[i] = std::move(gt);
  });
  return out;
}

// Serialization ----------------------------------------------------------------

using nlohmann::json;

inline const char* kind_name(Primitive::Kind k) {
  switch (k) {
    case Primitive::Kind::Plane: return "plane";
    case Primitive::Kind::Sphere: return "sphere";
    case Primitive::Kind::Box: return "box";
  }
  return "plane";
}

inline json scene_to_json(const SyntheticScene& s) {
  json prims = json::array();
  for (const auto& p : s.primitives) {
    json j = io::pose_to_json(p.pose);
    j.erase("convention");
    j["type"] = kind_name(p.kind);
    j["size"] = {p.size.x(), p.size.y(), p.size.z()};
    prims.push_back(j);
  }
  json poses = json::array();
  for (const auto& p : s.trajectory) poses.push_back(io::pose_to_json(p));
  return json{{"camera",
               {{"fx", s.camera.fx},
                {"fy", s.camera.fy},
                {"cx", s.camera.cx},
                {"cy", s.camera.cy},
                {"width", s.camera.width},
                {"height", s.camera.height}}},
              {"primitives", prims},
              {"trajectory", {{"poses", poses}}},
              {"noise_sigma_mm", s.noise_sigma_mm},
              {"max_range_mm", s.max_range_mm},
              {"smear",
               {{"edge_band_px", s.smear.edge_band_px},
                {"rate", s.smear.rate},
                {"lambda_min", s.smear.lambda_min},
                {"lambda_max", s.smear.lambda_max},
                {"discontinuity_mm", s.smear.discontinuity_mm},
                {"discontinuity_relative", s.smear.discontinuity_relative},
                {"min_displacement_mm", s.smear.min_displacement_mm}}},
              {"seed", s.seed}};
}

inline Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("scene config: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

/// Parses a scene config. Missing keys fall back to the default scene, so
/// `{"smear": {"rate": 0}}` is a valid config. The trajectory is either
/// {"poses": [...]} or an arc {"type": "arc", "center", "radius_mm",
/// "start_deg", "step_deg", "frames", "bob_mm"}.
inline SyntheticScene scene_from_json(const json& j) {
  try {
    const int frames = j.contains("trajectory") && j["trajectory"].contains("frames")
                           ? j["trajectory"]["frames"].get<int>()
                           : 30;
    if (frames < 2) throw ConfigError("scene config: at least two frames required");
    SyntheticScene s = default_scene(j.value("seed", std::uint64_t{1}), frames);
    if (j.contains("camera")) {
      const auto& c = j["camera"];
      s.camera = CameraModel{c.at("fx").get<double>(), c.at("fy").get<double>(), c.at("cx").get<double>(),
                             c.at("cy").get<double>(), c.at("width").get<int>(), c.at("height").get<int>()};
    }
    if (j.contains("primitives")) {
      s.primitives.clear();
      for (const auto& pj : j["primitives"]) {
        Primitive p;
        const std::string type = pj.at("type").get<std::string>();
        if (type == "plane") p.kind = Primitive::Kind::Plane;
        else if (type == "sphere") p.kind = Primitive::Kind::Sphere;
        else if (type == "box") p.kind = Primitive::Kind::Box;
        else throw ConfigError("scene config: unknown primitive type " + type);
        if (pj.contains("rotation")) {
          p.pose = io::pose_from_json(pj, "primitive");
        } else {
          if (pj.contains("normal") && p.kind == Primitive::Kind::Plane)
            p.pose = Primitive::plane(Eigen::Vector3d::Zero(), vec3(pj["normal"]), 0, 0).pose;
          p.pose.translation = vec3(pj.at("center"));
        }
        p.size = vec3(pj.at("size"));
        s.primitives.push_back(p);
      }
    }
    if (j.contains("trajectory")) {
      const auto& t = j["trajectory"];
      if (t.contains("poses")) {
        s.trajectory.clear();
        for (const auto& pj : t["poses"]) s.trajectory.push_back(io::pose_from_json(pj, "trajectory"));
      } else {
        ArcTrajectory arc;
        arc.frames = frames;
        arc.start_deg = -arc.step_deg * (frames - 1) / 2.0;
        if (t.contains("center")) arc.center = vec3(t["center"]);
        arc.radius_mm = t.value("radius_mm", arc.radius_mm);
        arc.step_deg = t.value("step_deg", arc.step_deg);
        arc.start_deg = t.value("start_deg", -arc.step_deg * (frames - 1) / 2.0);
        arc.bob_mm = t.value("bob_mm", arc.bob_mm);
        s.trajectory = arc.poses();
      }
    }
    s.noise_sigma_mm = j.value("noise_sigma_mm", s.noise_sigma_mm);
    s.max_range_mm = j.value("max_range_mm", s.max_range_mm);
    if (j.contains("smear")) {
      const auto& m = j["smear"];
      s.smear.edge_band_px = m.value("edge_band_px", s.smear.edge_band_px);
      s.smear.rate = m.value("rate", s.smear.rate);
      s.smear.lambda_min = m.value("lambda_min", s.smear.lambda_min);
      s.smear.lambda_max = m.value("lambda_max", s.smear.lambda_max);
      s.smear.discontinuity_mm = m.value("discontinuity_mm", s.smear.discontinuity_mm);
      s.smear.discontinuity_relative = m.value("discontinuity_relative", s.smear.discontinuity_relative);
      s.smear.min_displacement_mm = m.value("min_displacement_mm", s.smear.min_displacement_mm);
    }
    s.validate();
    return s;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("scene config: ") + ex.what());
  } catch (const DataError& ex) {
    throw ConfigError(ex.what());
  }
}

/// Writes the dataset layout plus gt/ masks, gt/poses/ and scene.json.
/// Poses go to poses/ as well unless `write_poses` is false.
inline void write_dataset(const std::filesystem::path& dir, const SyntheticScene& scene,
                          const SimulatedSequence& sim, bool write_poses = true) {
  SceneSequence seq = sim.sequence;
  if (!write_poses)
    for (auto& f : seq.frames) f.pose.reset();
  io::save_sequence(dir, seq);
  for (std::size_t i = 0; i < sim.ground_truth.size(); ++i)
    io::save_ground_truth(dir, seq.frames[i].frame_id, sim.ground_truth[i]);
  io::write_poses(dir, sim.sequence, "gt/poses");
  io::write_json(dir / "scene.json", scene_to_json(scene));
}

/// Ground-truth poses written by write_dataset, if present.
inline std::optional<std::vector<RigidPose>> load_true_poses(const std::filesystem::path& dir,
                                                             const SceneSequence& seq) {
  std::vector<RigidPose> poses;
  for (const auto& f : seq.frames) {
    const auto p = dir / "gt" / "poses" / (io::frame_stem(f.frame_id) + ".json");
    if (!std::filesystem::exists(p)) return std::nullopt;
    poses.push_back(io::read_pose(p));
  }
  return poses;
}

// Evaluation -------------------------------------------------------------------

/// Smeared-positive precision/recall over pixels that are labeled in both
/// rasters (unknown in either is excluded).
struct TruthComparison {
  std::optional<double> precision;
  std::optional<double> recall;
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  std::size_t true_negative = 0;
  /// Same statistics with valid as the positive class.
  std::optional<double> valid_precision;
  std::optional<double> valid_recall;
};

inline TruthComparison evaluate_against_truth(const LabelMap& labels, const MaskRaster& truth) {
  if (!labels.label.same_shape(truth)) throw DataError("evaluate: dimension mismatch between labels and truth");
  TruthComparison r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto pred = static_cast<Label>(labels.label[i]);
    const auto gt = static_cast<Label>(truth[i]);
    if (pred == Label::Unknown || gt == Label::Unknown) continue;
    const bool p = pred == Label::Smeared, t = gt == Label::Smeared;
    if (p && t) ++r.true_positive;
    else if (p && !t) ++r.false_positive;
    else if (!p && t) ++r.false_negative;
    else ++r.true_negative;
  }
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(r.true_positive, r.true_positive + r.false_positive);
  r.recall = ratio(r.true_positive, r.true_positive + r.false_negative);
  r.valid_precision = ratio(r.true_negative, r.true_negative + r.false_negative);
  r.valid_recall = ratio(r.true_negative, r.true_negative + r.false_positive);
  // All-unknown predictions recall nothing when truth has positives.
  if (!r.recall) {
    std::size_t positives = 0;
    for (auto t : truth) positives += t == 2;
    if (positives > 0) r.recall = 0.0;
  }
  return r;
}

}  // namespace smear::sim
