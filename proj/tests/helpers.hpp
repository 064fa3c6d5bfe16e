#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "smear/smear.hpp"

namespace smear::test {

inline CameraModel small_camera(int w = 64, int h = 48) {
  return CameraModel{60.0, 60.0, (w - 1) / 2.0, (h - 1) / 2.0, w, h};
}

inline DepthFrame flat_frame(int id, std::uint16_t depth, const CameraModel& cam = small_camera(),
                             std::optional<RigidPose> pose = RigidPose::identity()) {
  DepthFrame f;
  f.frame_id = id;
  f.camera = cam;
  f.depth = DepthRaster(cam.width, cam.height, depth);
  f.pose = pose;
  return f;
}

inline RigidPose random_pose(std::mt19937_64& rng, double max_angle_rad, double max_translation) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Vector3d axis(u(rng), u(rng), u(rng));
  axis.normalize();
  const double angle = max_angle_rad * std::abs(u(rng));
  return RigidPose::from_axis_angle(angle * axis,
                                    Eigen::Vector3d(u(rng), u(rng), u(rng)) * max_translation / std::sqrt(3.0));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("smear_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Default scene with a back wall narrower than the view: smeared points
/// next to the wall edges see past it from neighboring viewpoints.
inline sim::SyntheticScene hole_scene(std::uint64_t seed = 1, int frames = 12) {
  sim::SyntheticScene s = sim::default_scene(seed, frames);
  s.primitives[0] = sim::Primitive::plane({0.0, 0.0, 3000.0}, {0.0, 0.0, -1.0}, 600.0, 1000.0);
  return s;
}

inline std::size_t count_nonzero(const MaskRaster& m) {
  std::size_t n = 0;
  for (auto v : m) n += v != 0;
  return n;
}

}  // namespace smear::test
