#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace smear;
using smear::test::flat_frame;
using smear::test::small_camera;

namespace {

DepthFrame random_depth_frame(std::mt19937_64& rng, const CameraModel& cam, int id, const RigidPose& pose) {
  std::uniform_int_distribution<int> d(300, 6000);
  std::bernoulli_distribution hole(0.1);
  DepthFrame f = flat_frame(id, 0, cam, pose);
  for (auto& v : f.depth) v = hole(rng) ? 0 : static_cast<std::uint16_t>(d(rng));
  return f;
}

}  // namespace

TEST(Backproject, PrincipalPointOnOpticalAxis) {
  CameraModel cam{100.0, 100.0, 20.0, 10.0, 41, 21};
  DepthFrame f = flat_frame(0, 0, cam);
  f.depth(20, 10) = 1000;
  const PointCloud c = backproject(f);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.points[0], Eigen::Vector3d(0.0, 0.0, 1000.0));
  EXPECT_EQ(c.source_pixel[0], (SourcePixel{0, 20, 10}));
}

TEST(Backproject, SkipsZeroDepth) {
  DepthFrame f = flat_frame(0, 1500);
  f.depth(3, 4) = 0;
  const PointCloud c = backproject(f);
  EXPECT_EQ(c.size(), f.depth.size() - 1);
  for (const auto& sp : c.source_pixel) EXPECT_FALSE(sp.u == 3 && sp.v == 4);
}

TEST(Backproject, WorldFrameNeedsPose) {
  DepthFrame f = flat_frame(0, 1500, small_camera(), std::nullopt);
  EXPECT_THROW(backproject(f, Frame::World), GeometryError);
  EXPECT_NO_THROW(backproject(f, Frame::Camera));
}

TEST(Backproject, ReprojectionRecoversPixelAndDepth) {
  std::mt19937_64 rng(5);
  const CameraModel cam = small_camera(160, 120);
  const DepthFrame f = random_depth_frame(rng, cam, 0, test::random_pose(rng, 1.0, 2000.0));
  const PointCloud c = backproject(f);
  const RigidPose inv = f.pose->inverse();
  double worst_px = 0.0, worst_mm = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::Vector3d pc = inv * c.points[i];
    const Eigen::Vector2d px = cam.project(pc);
    const auto& sp = c.source_pixel[i];
    worst_px = std::max({worst_px, std::abs(px.x() - sp.u), std::abs(px.y() - sp.v)});
    worst_mm = std::max(worst_mm, std::abs(pc.z() - f.depth(sp.u, sp.v)));
  }
  EXPECT_LT(worst_px, 1e-6);
  EXPECT_LT(worst_mm, 1e-6);
}

TEST(ReprojectIndex, SameFrameIsIdentity) {
  std::mt19937_64 rng(6);
  const DepthFrame f = random_depth_frame(rng, small_camera(), 0, test::random_pose(rng, 1.0, 500.0));
  const auto idx = reproject_index(f, f);
  for (int v = 0; v < f.camera.height; ++v)
    for (int u = 0; u < f.camera.width; ++u) {
      const ProjectedPixel& p = idx(u, v);
      if (f.depth(u, v) == 0) {
        EXPECT_FALSE(p.valid);
        continue;
      }
      ASSERT_TRUE(p.in_frame);
      EXPECT_NEAR(p.u, u, 1e-9);
      EXPECT_NEAR(p.v, v, 1e-9);
      EXPECT_NEAR(p.depth, f.depth(u, v), 1e-9);
    }
}

TEST(ReprojectIndex, AxialTranslationShortensDepth) {
  const CameraModel cam{100.0, 100.0, 20.0, 10.0, 41, 21};
  const DepthFrame f = flat_frame(0, 2000, cam);
  const DepthFrame g = flat_frame(1, 0, cam, RigidPose::from_axis_angle(Eigen::Vector3d::Zero(), {0.0, 0.0, 300.0}));
  const auto idx = reproject_index(f, g);
  EXPECT_NEAR(idx(20, 10).depth, 1700.0, 1e-9);
  EXPECT_NEAR(idx(20, 10).u, 20.0, 1e-9);
  EXPECT_NEAR(idx(20, 10).v, 10.0, 1e-9);
}

TEST(ReprojectIndex, MatchesBackprojectThenProject) {
  std::mt19937_64 rng(7);
  const CameraModel cam = small_camera(80, 60);
  for (int trial = 0; trial < 5; ++trial) {
    const DepthFrame f = random_depth_frame(rng, cam, 0, test::random_pose(rng, 0.5, 500.0));
    const DepthFrame g = flat_frame(1, 0, cam, *f.pose * test::random_pose(rng, 0.2, 200.0));
    const auto idx = reproject_index(f, g);
    const PointCloud world = backproject(f);
    const RigidPose to_g = g.pose->inverse();
    for (std::size_t i = 0; i < world.size(); ++i) {
      const Eigen::Vector3d pg = to_g * world.points[i];
      const auto& sp = world.source_pixel[i];
      const ProjectedPixel& p = idx(sp.u, sp.v);
      ASSERT_EQ(p.valid, pg.z() > 0.0);
      if (!p.valid) continue;
      const Eigen::Vector2d px = cam.project(pg);
      EXPECT_NEAR(p.u, px.x(), 1e-6);
      EXPECT_NEAR(p.v, px.y(), 1e-6);
      EXPECT_NEAR(p.depth, pg.z(), 1e-6);
    }
  }
}

TEST(ReprojectIndex, NeedsPoses) {
  const DepthFrame f = flat_frame(0, 1000);
  const DepthFrame g = flat_frame(1, 1000, small_camera(), std::nullopt);
  EXPECT_THROW(reproject_index(f, g), GeometryError);
}

TEST(RenderDepth, SinglePointOnAxis) {
  const CameraModel cam{100.0, 100.0, 20.0, 10.0, 41, 21};
  PointCloud c;
  c.points = {{0.0, 0.0, 2000.0}};
  c.source_pixel = {{0, 0, 0}};
  const RenderedDepth r = render_depth(c, cam, RigidPose::identity());
  int covered = 0;
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) covered += r.covered(u, v);
  EXPECT_EQ(covered, 1);
  EXPECT_TRUE(r.covered(20, 10));
  EXPECT_EQ(r.depth(20, 10), 2000.0);
  EXPECT_EQ(r.source_index(20, 10), 0);
}

TEST(RenderDepth, KeepsNearestOnSharedRay) {
  const CameraModel cam{100.0, 100.0, 20.0, 10.0, 41, 21};
  PointCloud c;
  c.points = {{60.0, 24.0, 1200.0}, {40.0, 16.0, 800.0}};
  c.source_pixel = {{0, 0, 0}, {0, 1, 0}};
  const RenderedDepth r = render_depth(c, cam, RigidPose::identity());
  EXPECT_EQ(r.depth(25, 12), 800.0);
  EXPECT_EQ(r.source_index(25, 12), 1);
}

TEST(RenderDepth, ZBufferNeverExceedsAnyPointOnThePixel) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> x(-500.0, 500.0), z(500.0, 3000.0);
  const CameraModel cam = small_camera();
  PointCloud c;
  for (int i = 0; i < 5000; ++i) {
    c.points.emplace_back(x(rng), x(rng), z(rng));
    c.source_pixel.push_back({0, i, 0});
  }
  const RenderedDepth r = render_depth(c, cam, RigidPose::identity());
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) EXPECT_EQ(r.depth(u, v) > 0.0, r.covered(u, v));
  for (const auto& p : c.points) {
    const Eigen::Vector2d px = cam.project(p);
    const int u = nearest_pixel(px.x()), v = nearest_pixel(px.y());
    if (u < 0 || v < 0 || u >= cam.width || v >= cam.height) continue;
    EXPECT_LE(r.depth(u, v), p.z());
  }
}

TEST(RenderDepth, SelfRenderReproducesDepth) {
  std::mt19937_64 rng(9);
  const CameraModel cam = small_camera(120, 90);
  const DepthFrame f = random_depth_frame(rng, cam, 0, test::random_pose(rng, 1.0, 1000.0));
  const RenderedDepth r = render_depth(backproject(f), cam, *f.pose);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) EXPECT_NEAR(r.depth(u, v), f.depth(u, v), 1e-6);
}

TEST(Omega, FrontoParallelPlaneAtPrincipalPoint) {
  const CameraModel cam{100.0, 100.0, 20.0, 10.0, 41, 21};
  const FloatRaster w = omega_map(flat_frame(0, 1500, cam));
  EXPECT_FLOAT_EQ(w(20, 10), 1.0f);
  EXPECT_EQ(w(0, 0), 0.0f);
}

TEST(Omega, GrazingPlaneIsNearZero) {
  // Plane x = 500 seen from the origin, almost containing the rays.
  const CameraModel cam = small_camera(64, 48);
  Raster<double> depth(cam.width, cam.height, 0.0);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      const Eigen::Vector3d r = cam.ray(u, v);
      if (r.x() > 0.05) depth(u, v) = 500.0 / r.x();
    }
  const FloatRaster w = omega_map(depth, cam);
  // At the pixel nearest the optical axis side the ray is almost parallel to the plane.
  const int u = static_cast<int>(std::ceil(cam.cx + 0.06 * cam.fx)) + 1;
  EXPECT_GT(w(u, 24), 0.0f);
  EXPECT_LT(w(u, 24), 0.12f);
}

TEST(Omega, SphereMatchesAnalyticNormals) {
  sim::SyntheticScene s;
  s.camera = CameraModel{400.0, 400.0, 79.5, 59.5, 160, 120};
  const Eigen::Vector3d center(50.0, -30.0, 1500.0);
  const double radius = 400.0;
  s.primitives = {sim::Primitive::sphere(center, radius)};
  const Raster<double> depth = sim::raycast_depth(s, RigidPose::identity());
  const FloatRaster w = omega_map(depth, s.camera);
  int checked = 0;
  for (int v = 2; v + 2 < s.camera.height; ++v)
    for (int u = 2; u + 2 < s.camera.width; ++u) {
      if (depth(u, v) == 0.0) continue;
      const Eigen::Vector3d p = depth(u, v) * s.camera.ray(u, v);
      const Eigen::Vector3d n = (p - center).normalized();
      const double expected = std::abs(n.dot(p.normalized()));
      if (expected < 0.3) continue;  // silhouette
      EXPECT_NEAR(w(u, v), expected, 1e-3) << u << "," << v;
      ++checked;
    }
  EXPECT_GT(checked, 1000);
}

TEST(Omega, InRangeAndInvariantUnderRigidMotion) {
  sim::SyntheticScene s = sim::default_scene(1, 2);
  const RigidPose pose = s.trajectory[0];
  const Raster<double> d0 = sim::raycast_depth(s, pose);
  std::mt19937_64 rng(10);
  const RigidPose t = test::random_pose(rng, 1.0, 1000.0);
  for (auto& p : s.primitives) p.pose = t * p.pose;
  const Raster<double> d1 = sim::raycast_depth(s, t * pose);
  const FloatRaster w0 = omega_map(d0, s.camera), w1 = omega_map(d1, s.camera);
  double worst = 0.0;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    EXPECT_GE(w0[i], 0.0f);
    EXPECT_LE(w0[i], 1.0f);
    if ((d0[i] == 0.0) != (d1[i] == 0.0)) continue;  // ray exactly at an edge
    worst = std::max(worst, std::abs(static_cast<double>(w0[i]) - w1[i]));
  }
  EXPECT_LT(worst, 1e-6);
}
