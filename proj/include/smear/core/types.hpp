#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "smear/core/error.hpp"
#include "smear/core/raster.hpp"

namespace smear {

/// Pinhole intrinsics in pixels. Pixel (u, v) has its center at integer
/// coordinates, so the principal point of a 320x240 sensor is near (159.5, 119.5).
struct CameraModel {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
    if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
      throw ConfigError("camera: principal point outside the image");
  }

  /// Ray through pixel (u, v) scaled so that its z component is 1.
  Eigen::Vector3d ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

  /// Projects a camera-frame point; the caller guarantees z > 0.
  Eigen::Vector2d project(const Eigen::Vector3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

/// Rigid transform x_world = R x_cam + t (camera-to-world), translation in mm.
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidPose identity() { return {}; }

  static RigidPose from_axis_angle(const Eigen::Vector3d& axis_angle, const Eigen::Vector3d& t) {
    RigidPose p;
    const double angle = axis_angle.norm();
    if (angle > 0.0) p.rotation = Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
    p.translation = t;
    return p;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& x) const { return rotation * x + translation; }

  RigidPose operator*(const RigidPose& rhs) const {
    RigidPose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  RigidPose inverse() const {
    RigidPose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  Eigen::Vector3d center() const { return translation; }

  /// Re-orthonormalizes the rotation (polar decomposition via SVD).
  void orthonormalize() {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
      Eigen::Matrix3d u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    rotation = r;
  }

  bool is_valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  void validate() const {
    if (!is_valid(1e-6)) throw DataError("pose: rotation is not a proper orthonormal matrix");
  }
};

/// Rotation angle (degrees) and translation distance (mm) between two poses.
struct PoseError {
  double rotation_deg = 0.0;
  double translation_mm = 0.0;
};

inline PoseError pose_error(const RigidPose& a, const RigidPose& b) {
  const Eigen::Matrix3d dr = a.rotation.transpose() * b.rotation;
  const double cos_angle = std::clamp((dr.trace() - 1.0) / 2.0, -1.0, 1.0);
  return {std::acos(cos_angle) * 180.0 / std::numbers::pi, (a.translation - b.translation).norm()};
}

/// One sensor frame. Depth is in millimeters, 0 = no measurement.
struct DepthFrame {
  int frame_id = 0;
  DepthRaster depth;
  CameraModel camera;
  std::optional<RigidPose> pose;

  void validate() const {
    camera.validate();
    if (!depth.same_shape(camera.width, camera.height))
      throw DataError("frame " + std::to_string(frame_id) + ": dimension mismatch between depth raster and camera");
    if (pose) pose->validate();
  }

  bool posed() const { return pose.has_value(); }

  const RigidPose& require_pose() const {
    if (!pose) throw GeometryError("frame " + std::to_string(frame_id) + " has no pose");
    return *pose;
  }
};

struct SceneSequence {
  std::vector<DepthFrame> frames;
  std::map<std::string, std::string> manifest;

  std::size_t size() const { return frames.size(); }
  const CameraModel& camera() const { return frames.front().camera; }

  bool fully_posed() const {
    for (const auto& f : frames)
      if (!f.posed()) return false;
    return !frames.empty();
  }

  void validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      frames[i].validate();
      if (i > 0) {
        if (frames[i].frame_id <= frames[i - 1].frame_id) throw DataError("frame ids must be strictly increasing");
        if (!(frames[i].camera == frames[0].camera)) throw DataError("all frames must share one camera model");
      }
    }
  }
};

/// Per-pixel evidence flags (1 = set) and the confidence of valid evidence.
/// empty_clearance records, for pixels with e = 1, the largest Chebyshev
/// radius r such that the (2r+1)x(2r+1) neighborhood around the projected
/// pixel was empty in at least one reference render (0 when e = 0).
struct EvidenceMap {
  MaskRaster v;
  MaskRaster b;
  MaskRaster e;
  FloatRaster c;
  MaskRaster empty_clearance;

  EvidenceMap() = default;
  EvidenceMap(int width, int height)
      : v(width, height, 0), b(width, height, 0), e(width, height, 0), c(width, height, 0.0f),
        empty_clearance(width, height, 0) {}

  int width() const { return v.width(); }
  int height() const { return v.height(); }

  friend bool operator==(const EvidenceMap&, const EvidenceMap&) = default;
};

enum class Label : std::uint8_t { Unknown = 0, Valid = 1, Smeared = 2 };

struct LabelMap {
  MaskRaster label;
  FloatRaster confidence;

  LabelMap() = default;
  LabelMap(int width, int height) : label(width, height, 0), confidence(width, height, 0.0f) {}

  int width() const { return label.width(); }
  int height() const { return label.height(); }

  Label at(int u, int v) const { return static_cast<Label>(label(u, v)); }

  void validate() const {
    if (!label.same_shape(confidence)) throw DataError("label map: raster size mismatch");
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (label[i] > 2) throw DataError("label map: label value out of range");
      if (!(confidence[i] >= 0.0f && confidence[i] <= 1.0f)) throw DataError("label map: confidence outside [0,1]");
      if (label[i] == 0 && confidence[i] != 0.0f) throw DataError("label map: unknown pixel with nonzero confidence");
    }
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct AnnotatorConfig {
  double epsilon_mm = 4.0;
  double delta_mm = 15.0;
  int window = 3;
  int m = 4;
  double alpha = 0.3;
  double beta = 0.7;
  /// Optional growth of epsilon with range, mm per meter of depth (0 = constant).
  double epsilon_per_meter = 0.0;

  double epsilon_at(double depth_mm) const { return epsilon_mm + epsilon_per_meter * depth_mm * 1e-3; }

  void validate() const {
    if (!(epsilon_mm > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(delta_mm > epsilon_mm)) throw ConfigError("delta must exceed epsilon");
    if (window < 1 || window % 2 == 0) throw ConfigError("window must be an odd integer >= 1");
    if (m < 2 || m % 2 != 0) throw ConfigError("m must be an even integer >= 2");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("alpha and beta must be positive");
    if (epsilon_per_meter < 0.0) throw ConfigError("epsilon_per_meter must be non-negative");
  }
};

}  // namespace smear
