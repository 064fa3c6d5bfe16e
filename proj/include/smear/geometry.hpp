#pragma once

// Projective geometry on depth frames: backprojection, the pixel index map
// between two posed cameras, z-buffered point rendering, and the
// normal-view (omega) map.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "smear/core/types.hpp"

namespace smear {

struct SourcePixel {
  int frame_id = 0;
  int u = 0;
  int v = 0;
  friend bool operator==(const SourcePixel&, const SourcePixel&) = default;
};

/// Points in millimeters. normals is either empty or parallel to points
/// (a zero vector marks a point without a usable normal).
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<SourcePixel> source_pixel;
  std::vector<Eigen::Vector3d> normals;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }

  void reserve(std::size_t n) {
    points.reserve(n);
    source_pixel.reserve(n);
  }

  void append(const PointCloud& other) {
    const bool with_normals = has_normals() || other.has_normals();
    const std::size_t old_size = points.size();
    points.insert(points.end(), other.points.begin(), other.points.end());
    source_pixel.insert(source_pixel.end(), other.source_pixel.begin(), other.source_pixel.end());
    if (!with_normals) return;
    normals.resize(old_size, Eigen::Vector3d::Zero());
    if (other.has_normals())
      normals.insert(normals.end(), other.normals.begin(), other.normals.end());
    else
      normals.resize(points.size(), Eigen::Vector3d::Zero());
  }

  /// Applies a rigid transform to points and normals.
  void transform(const RigidPose& pose) {
    for (auto& p : points) p = pose * p;
    for (auto& n : normals) n = pose.rotation * n;
  }
};

enum class Frame { Camera, World };

/// Rounds a continuous pixel coordinate to the pixel whose center is nearest.
inline int nearest_pixel(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// One point per pixel with depth > 0: point = pose * (depth * K^-1 [u v 1]).
inline PointCloud backproject(const DepthFrame& frame, Frame frame_of_reference = Frame::World) {
  const CameraModel& cam = frame.camera;
  const RigidPose pose = frame_of_reference == Frame::World ? frame.require_pose() : RigidPose::identity();
  PointCloud cloud;
  cloud.reserve(frame.depth.size());
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const std::uint16_t d = frame.depth(u, v);
      if (d == 0) continue;
      cloud.points.push_back(pose * (static_cast<double>(d) * cam.ray(u, v)));
      cloud.source_pixel.push_back({frame.frame_id, u, v});
    }
  }
  return cloud;
}

/// Camera-frame point for every pixel (zero where depth is missing).
template <typename T>
Raster<Eigen::Vector3d> camera_points(const Raster<T>& depth, const CameraModel& cam) {
  Raster<Eigen::Vector3d> pts(cam.width, cam.height, Eigen::Vector3d::Zero());
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u)
      if (const double d = static_cast<double>(depth(u, v)); d > 0.0) pts(u, v) = d * cam.ray(u, v);
  return pts;
}

/// Facet normals from central differences of the backprojected 4-neighborhood,
/// in the camera frame, oriented toward the camera. A zero vector marks pixels
/// where the pixel or a needed neighbor has no depth, or where a neighbor's
/// depth differs from the center by more than max_relative_jump * depth.
template <typename T>
Raster<Eigen::Vector3d> depth_normals(const Raster<T>& depth, const CameraModel& cam,
                                      double max_relative_jump = std::numeric_limits<double>::infinity()) {
  const auto pts = camera_points(depth, cam);
  Raster<Eigen::Vector3d> normals(cam.width, cam.height, Eigen::Vector3d::Zero());
  for (int v = 1; v + 1 < cam.height; ++v) {
    for (int u = 1; u + 1 < cam.width; ++u) {
      const double d = static_cast<double>(depth(u, v));
      if (!(d > 0.0)) continue;
      const double dl = static_cast<double>(depth(u - 1, v)), dr = static_cast<double>(depth(u + 1, v));
      const double du = static_cast<double>(depth(u, v - 1)), dd = static_cast<double>(depth(u, v + 1));
      if (!(dl > 0.0 && dr > 0.0 && du > 0.0 && dd > 0.0)) continue;
      const double limit = max_relative_jump * d;
      if (std::abs(dl - d) > limit || std::abs(dr - d) > limit || std::abs(du - d) > limit ||
          std::abs(dd - d) > limit)
        continue;
      const Eigen::Vector3d tu = pts(u + 1, v) - pts(u - 1, v);
      const Eigen::Vector3d tv = pts(u, v + 1) - pts(u, v - 1);
      Eigen::Vector3d n = tu.cross(tv);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(pts(u, v)) > 0.0) n = -n;
      normals(u, v) = n;
    }
  }
  return normals;
}

inline Raster<Eigen::Vector3d> depth_normals(const DepthFrame& frame,
                                             double max_relative_jump = std::numeric_limits<double>::infinity()) {
  return depth_normals(frame.depth, frame.camera, max_relative_jump);
}

// Index map --------------------------------------------------------------------

/// Where a source pixel lands in another camera.
struct ProjectedPixel {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
  /// Source pixel has depth and the point is in front of the target camera.
  bool valid = false;
  /// valid and the nearest target pixel lies inside the target image.
  bool in_frame = false;
};

/// Maps every pixel of frame_f to its coordinates and depth in frame_g.
inline Raster<ProjectedPixel> reproject_index(const DepthFrame& frame_f, const DepthFrame& frame_g) {
  const RigidPose rel = frame_g.require_pose().inverse() * frame_f.require_pose();
  const CameraModel& cf = frame_f.camera;
  const CameraModel& cg = frame_g.camera;
  Raster<ProjectedPixel> out(cf.width, cf.height);
  for (int v = 0; v < cf.height; ++v) {
    for (int u = 0; u < cf.width; ++u) {
      const std::uint16_t d = frame_f.depth(u, v);
      if (d == 0) continue;
      const Eigen::Vector3d pg = rel * (static_cast<double>(d) * cf.ray(u, v));
      if (!(pg.z() > 0.0)) continue;
      const Eigen::Vector2d px = cg.project(pg);
      ProjectedPixel& p = out(u, v);
      p.u = px.x();
      p.v = px.y();
      p.depth = pg.z();
      p.valid = true;
      const int iu = nearest_pixel(px.x()), iv = nearest_pixel(px.y());
      p.in_frame = iu >= 0 && iv >= 0 && iu < cg.width && iv < cg.height;
    }
  }
  return out;
}

// Rendering --------------------------------------------------------------------

struct RenderedDepth {
  /// Rendered depth in mm, 0 where no point landed.
  Raster<double> depth;
  /// Index into the rendered cloud of the winning point, -1 where empty.
  Raster<std::int32_t> source_index;

  bool covered(int u, int v) const { return source_index(u, v) >= 0; }
};

/// Splats each point to its nearest pixel in the target camera, keeping the
/// minimum depth per pixel. Equal depths keep the earlier point.
inline RenderedDepth render_depth(const PointCloud& cloud, const CameraModel& camera, const RigidPose& camera_pose) {
  RenderedDepth out{Raster<double>(camera.width, camera.height, 0.0),
                    Raster<std::int32_t>(camera.width, camera.height, -1)};
  const RigidPose world_to_cam = camera_pose.inverse();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Eigen::Vector3d pc = world_to_cam * cloud.points[i];
    if (!(pc.z() > 0.0)) continue;
    const Eigen::Vector2d px = camera.project(pc);
    const int u = nearest_pixel(px.x()), v = nearest_pixel(px.y());
    if (u < 0 || v < 0 || u >= camera.width || v >= camera.height) continue;
    std::int32_t& idx = out.source_index(u, v);
    double& d = out.depth(u, v);
    if (idx < 0 || pc.z() < d) {
      d = pc.z();
      idx = static_cast<std::int32_t>(i);
    }
  }
  return out;
}

// Omega ----------------------------------------------------------------------

/// |n . p/|p|| per pixel, 0 where depth or a needed neighbor is missing.
template <typename T>
FloatRaster omega_map(const Raster<T>& depth, const CameraModel& cam) {
  const auto normals = depth_normals(depth, cam);
  FloatRaster omega(cam.width, cam.height, 0.0f);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Eigen::Vector3d& n = normals(u, v);
      if (n.isZero()) continue;
      const Eigen::Vector3d ray = cam.ray(u, v).normalized();
      omega(u, v) = static_cast<float>(std::min(1.0, std::abs(n.dot(ray))));
    }
  }
  return omega;
}

inline FloatRaster omega_map(const DepthFrame& frame) { return omega_map(frame.depth, frame.camera); }

}  // namespace smear
