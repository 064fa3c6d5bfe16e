#pragma once

// Pose estimation for depth sequences with point-to-plane ICP over
// neighboring frames.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "smear/core/types.hpp"
#include "smear/geometry.hpp"
#include "smear/kdtree.hpp"
#include "smear/parallel.hpp"

namespace smear {

enum class IcpMetric { PointToPlane, PointToPoint };

struct IcpConfig {
  int max_iterations = 60;
  /// Final correspondence gate. Matching starts at initial_radius_mm and
  /// shrinks geometrically to this value.
  double correspondence_radius_mm = 40.0;
  double initial_radius_mm = 400.0;
  double radius_decay = 0.75;
  /// Stop when |rotation step| (rad) + |translation step| / 1000 mm falls below this.
  double convergence_eps = 1e-9;
  /// Previous frames each frame is aligned against.
  int neighbor_span = 2;
  /// Voxel size for downsampling frame clouds (0 = off).
  double voxel_mm = 20.0;
  IcpMetric metric = IcpMetric::PointToPlane;
  /// Neighbor depth jump (relative) above which a facet normal is discarded.
  double normal_max_relative_jump = 0.05;
  /// Normals are fitted over a (2r+1)^2 pixel window.
  int normal_window_radius = 2;

  void validate() const {
    if (max_iterations < 1) throw ConfigError("icp: max_iterations must be >= 1");
    if (!(correspondence_radius_mm > 0.0)) throw ConfigError("icp: correspondence radius must be positive");
    if (!(initial_radius_mm >= correspondence_radius_mm))
      throw ConfigError("icp: initial radius must be >= correspondence radius");
    if (!(radius_decay > 0.0 && radius_decay <= 1.0)) throw ConfigError("icp: radius_decay must lie in (0,1]");
    if (!(convergence_eps >= 0.0)) throw ConfigError("icp: convergence_eps must be non-negative");
    if (neighbor_span < 1) throw ConfigError("icp: neighbor_span must be >= 1");
    if (voxel_mm < 0.0) throw ConfigError("icp: voxel size must be non-negative");
    if (normal_window_radius < 1) throw ConfigError("icp: normal window radius must be >= 1");
  }
};

struct IcpResult {
  /// Maps source coordinates into target coordinates.
  RigidPose pose;
  /// RMS residual of inlier correspondences at the final gate.
  double rms = 0.0;
  double inlier_fraction = 0.0;
  int iterations = 0;
  /// Per accepted iteration: truncated RMS cost of the correspondences the
  /// step was solved from, before and after the step (after <= before).
  std::vector<std::pair<double, double>> step_residuals;
};

inline constexpr std::size_t kMinIcpPoints = 100;
inline constexpr std::size_t kMinCorrespondences = 6;

// Lie-group helpers ------------------------------------------------------------

inline Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

inline Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

// Cloud preparation ----------------------------------------------------------

/// Keeps, per voxel, the point closest to the voxel center. Deterministic.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel_mm) {
  if (voxel_mm <= 0.0 || cloud.empty()) return cloud;
  struct Cell {
    std::size_t index;
    double dist;
  };
  std::unordered_map<std::int64_t, Cell> cells;
  cells.reserve(cloud.size());
  auto key = [](std::int64_t x, std::int64_t y, std::int64_t z) {
    return ((x & 0x1FFFFF) << 42) | ((y & 0x1FFFFF) << 21) | (z & 0x1FFFFF);
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d s = cloud.points[i] / voxel_mm;
    const Eigen::Vector3d cell = s.array().floor();
    const double dist = (s - cell - Eigen::Vector3d::Constant(0.5)).squaredNorm();
    const std::int64_t k = key(static_cast<std::int64_t>(cell.x()), static_cast<std::int64_t>(cell.y()),
                               static_cast<std::int64_t>(cell.z()));
    auto [it, inserted] = cells.try_emplace(k, Cell{i, dist});
    if (!inserted && (dist < it->second.dist || (dist == it->second.dist && i < it->second.index)))
      it->second = Cell{i, dist};
  }
  std::vector<std::size_t> keep;
  keep.reserve(cells.size());
  for (const auto& [k, c] : cells) keep.push_back(c.index);
  std::sort(keep.begin(), keep.end());
  PointCloud out;
  out.reserve(keep.size());
  for (std::size_t i : keep) {
    out.points.push_back(cloud.points[i]);
    out.source_pixel.push_back(cloud.source_pixel[i]);
    if (cloud.has_normals()) out.normals.push_back(cloud.normals[i]);
  }
  return out;
}

/// Smallest-to-middle covariance eigenvalue ratio accepted as planar.
inline constexpr double kMaxPlaneFlatness = 0.01;

/// Normals from a plane fit over the (2r+1)^2 window, using only pixels whose
/// depth is within max_relative_jump of the center. Zero where fewer than
/// half the window qualifies or the fit is not planar.
inline Raster<Eigen::Vector3d> window_normals(const DepthFrame& frame, int r, double max_relative_jump) {
  const CameraModel& cam = frame.camera;
  const auto pts = camera_points(frame.depth, cam);
  Raster<Eigen::Vector3d> normals(cam.width, cam.height, Eigen::Vector3d::Zero());
  const int needed = (2 * r + 1) * (2 * r + 1) / 2 + 1;
  for (int v = r; v + r < cam.height; ++v) {
    for (int u = r; u + r < cam.width; ++u) {
      const double d = frame.depth(u, v);
      if (d == 0.0) continue;
      const double limit = max_relative_jump * d;
      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
      int count = 0;
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) {
          const double dn = frame.depth(u + du, v + dv);
          if (dn == 0.0 || std::abs(dn - d) > limit) continue;
          const Eigen::Vector3d& p = pts(u + du, v + dv);
          sum += p;
          outer.noalias() += p * p.transpose();
          ++count;
        }
      if (count < needed) continue;
      const Eigen::Vector3d mean = sum / count;
      const Eigen::Matrix3d cov = outer / count - mean * mean.transpose();
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
      const Eigen::Vector3d ev = es.eigenvalues();
      if (!(ev(0) < kMaxPlaneFlatness * ev(1))) continue;
      Eigen::Vector3d n = es.eigenvectors().col(0);
      if (n.dot(pts(u, v)) > 0.0) n = -n;
      normals(u, v) = n;
    }
  }
  return normals;
}

/// Camera-frame cloud with window normals for ICP, voxel downsampled. Pixels
/// without a usable normal and pixels where `exclude` is nonzero are dropped.
inline PointCloud icp_cloud(const DepthFrame& frame, const IcpConfig& cfg, const MaskRaster* exclude = nullptr) {
  const auto normals = window_normals(frame, cfg.normal_window_radius, cfg.normal_max_relative_jump);
  const CameraModel& cam = frame.camera;
  PointCloud cloud;
  cloud.reserve(frame.depth.size());
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const std::uint16_t d = frame.depth(u, v);
      if (d == 0 || normals(u, v).isZero()) continue;
      if (exclude && (*exclude)(u, v)) continue;
      cloud.points.push_back(static_cast<double>(d) * cam.ray(u, v));
      cloud.source_pixel.push_back({frame.frame_id, u, v});
      cloud.normals.push_back(normals(u, v));
    }
  }
  return voxel_downsample(cloud, cfg.voxel_mm);
}

/// PCA normals from k nearest neighbors, for clouds that carry none.
inline std::vector<Eigen::Vector3d> estimate_normals(const std::vector<Eigen::Vector3d>& points, std::size_t k = 10) {
  KdTree tree(points);
  std::vector<Eigen::Vector3d> normals(points.size(), Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nn = tree.knn(points[i], k);
    if (nn.size() < 3) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& n : nn) mean += points[n.index];
    mean /= static_cast<double>(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& n : nn) {
      const Eigen::Vector3d d = points[n.index] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    normals[i] = es.eigenvectors().col(0);
  }
  return normals;
}

// Pairwise ICP ---------------------------------------------------------------

namespace detail {

inline constexpr std::uint32_t kUnmatched = std::numeric_limits<std::uint32_t>::max();

/// One correspondence per source point (kUnmatched where none).
struct Association {
  std::vector<std::uint32_t> target;
  /// Truncated cost over all source points, see match_cost.
  double cost = 0.0;
  std::size_t matched = 0;
};

inline double residual(const Eigen::Vector3d& q, const Eigen::Vector3d& t, const Eigen::Vector3d& n,
                       IcpMetric metric) {
  return metric == IcpMetric::PointToPlane ? n.dot(q - t) : (q - t).norm();
}

/// Truncated squared residual min(r^2, R^2).
inline double match_cost(const Eigen::Vector3d& q, const Eigen::Vector3d& t, const Eigen::Vector3d& n,
                         double truncation, IcpMetric metric) {
  const double t2 = truncation * truncation;
  const double r = residual(q, t, n, metric);
  return std::min(r * r, t2);
}

/// Cost of a fixed assignment at `pose`.
inline double assignment_cost(const std::vector<Eigen::Vector3d>& source, const PointCloud& target,
                              const std::vector<Eigen::Vector3d>& target_normals, const RigidPose& pose,
                              const Association& a, double truncation, IcpMetric metric) {
  const double t2 = truncation * truncation;
  double cost = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (a.target[i] == kUnmatched) {
      cost += t2;
      continue;
    }
    cost += match_cost(pose * source[i], target.points[a.target[i]], target_normals[a.target[i]], truncation, metric);
  }
  return cost;
}

/// Nearest neighbor within `radius` (with a usable normal) per source point.
inline Association associate(const std::vector<Eigen::Vector3d>& source, const PointCloud& target,
                             const std::vector<Eigen::Vector3d>& target_normals, const KdTree& tree,
                             const RigidPose& pose, double radius, double truncation, IcpMetric metric) {
  Association a;
  a.target.assign(source.size(), kUnmatched);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Eigen::Vector3d q = pose * source[i];
    KdTree::Neighbor nn;
    if (tree.nearest(q, radius, nn) &&
        !(metric == IcpMetric::PointToPlane && target_normals[nn.index].isZero())) {
      a.target[i] = nn.index;
      a.cost += match_cost(q, target.points[nn.index], target_normals[nn.index], truncation, metric);
      ++a.matched;
    } else {
      a.cost += truncation * truncation;
    }
  }
  return a;
}

/// One linearized step from the matches whose residual lies within `gate`;
/// returns (rotation vector, translation).
inline std::pair<Eigen::Vector3d, Eigen::Vector3d> solve_step(const Association& a,
                                                              const std::vector<Eigen::Vector3d>& source,
                                                              const PointCloud& target,
                                                              const std::vector<Eigen::Vector3d>& target_normals,
                                                              const RigidPose& pose, IcpMetric metric, double gate,
                                                              double damping = 0.0) {
  if (metric == IcpMetric::PointToPoint) {
    std::vector<Eigen::Vector3d> src, dst;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (a.target[i] == kUnmatched) continue;
      const Eigen::Vector3d q = pose * source[i];
      if ((q - target.points[a.target[i]]).squaredNorm() > gate * gate) continue;
      src.push_back(q);
      dst.push_back(target.points[a.target[i]]);
    }
    if (src.size() < 3) return {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
    const Eigen::Map<const Eigen::Matrix3Xd> ms(src.front().data(), 3, static_cast<Eigen::Index>(src.size()));
    const Eigen::Map<const Eigen::Matrix3Xd> md(dst.front().data(), 3, static_cast<Eigen::Index>(dst.size()));
    const Eigen::Matrix4d t = Eigen::umeyama(ms, md, false);
    // Damping shortens the step toward the identity.
    const double scale = 1.0 / (1.0 + damping);
    return {scale * so3_log(t.topLeftCorner<3, 3>()), scale * Eigen::Vector3d(t.topRightCorner<3, 1>())};
  }
  Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (a.target[i] == kUnmatched) continue;
    const Eigen::Vector3d q = pose * source[i];
    const Eigen::Vector3d& p = target.points[a.target[i]];
    const Eigen::Vector3d& n = target_normals[a.target[i]];
    const double r = n.dot(q - p);
    if (std::abs(r) > gate) continue;
    Eigen::Matrix<double, 6, 1> j;
    j << q.cross(n), n;
    jtj.noalias() += j * j.transpose();
    jtr.noalias() += j * r;
  }
  // Levenberg-Marquardt: scale the diagonal.
  const Eigen::Matrix<double, 6, 1> diag = jtj.diagonal();
  jtj.diagonal() += (damping + 1e-9) * diag + Eigen::Matrix<double, 6, 1>::Constant(1e-12);
  const Eigen::Matrix<double, 6, 1> x = jtj.ldlt().solve(-jtr);
  return {x.head<3>(), x.tail<3>()};
}

}  // namespace detail

/// Estimates the transform mapping `source` onto `target`, starting at `init`.
inline IcpResult icp_pairwise(const PointCloud& source, const PointCloud& target, const RigidPose& init,
                              const IcpConfig& cfg) {
  cfg.validate();
  if (source.size() < kMinIcpPoints || target.size() < kMinIcpPoints)
    throw GeometryError("icp: degenerate geometry, fewer than 100 points in a cloud");

  std::vector<Eigen::Vector3d> normals =
      target.has_normals() ? target.normals : estimate_normals(target.points);
  const KdTree tree(target.points);
  const auto& src = source.points;

  IcpResult result;
  RigidPose pose = init;
  const double final_radius = cfg.correspondence_radius_mm;
  const double n_src = static_cast<double>(src.size());
  double radius = cfg.initial_radius_mm;
  detail::Association assoc = detail::associate(src, target, normals, tree, pose, radius, final_radius, cfg.metric);

  // A step is accepted when it does not raise the cost of the correspondences
  // it was solved from; otherwise it is retried with more damping.
  constexpr double kDamping[] = {0.0, 1e-2, 1e-1, 1.0};
  for (int it = 0; it < cfg.max_iterations; ++it) {
    bool accepted = false;
    double change = 0.0, after = 0.0;
    for (double damping : kDamping) {
      const auto [w, t] = detail::solve_step(assoc, src, target, normals, pose, cfg.metric, radius, damping);
      RigidPose step;
      step.rotation = so3_exp(w);
      step.translation = t;
      RigidPose candidate = step * pose;
      candidate.orthonormalize();
      after = detail::assignment_cost(src, target, normals, candidate, assoc, final_radius, cfg.metric);
      if (after <= assoc.cost) {
        pose = candidate;
        change = w.norm() + t.norm() / 1000.0;
        accepted = true;
        break;
      }
    }
    const bool at_final = radius <= final_radius;
    radius = std::max(final_radius, radius * cfg.radius_decay);
    if (accepted) {
      result.step_residuals.emplace_back(std::sqrt(assoc.cost / n_src), std::sqrt(after / n_src));
      result.iterations = it + 1;
      assoc = detail::associate(src, target, normals, tree, pose, radius, final_radius, cfg.metric);
    }
    if (at_final && (!accepted || change < cfg.convergence_eps)) break;
  }

  double sum = 0.0;
  std::size_t inliers = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (assoc.target[i] == detail::kUnmatched) continue;
    const Eigen::Vector3d q = pose * src[i];
    const Eigen::Vector3d& p = target.points[assoc.target[i]];
    const double r = detail::residual(q, p, normals[assoc.target[i]], cfg.metric);
    if (std::abs(r) > final_radius) continue;
    sum += r * r;
    ++inliers;
  }
  if (inliers < kMinCorrespondences) throw GeometryError("icp: degenerate geometry, insufficient correspondences");
  result.pose = pose;
  result.rms = std::sqrt(sum / static_cast<double>(inliers));
  result.inlier_fraction = static_cast<double>(inliers) / n_src;
  return result;
}

// Sequences ------------------------------------------------------------------

struct AlignmentReport {
  /// Per frame: RMS of the pairwise residuals used for its pose (0 for frame 0).
  std::vector<double> rms;
  std::vector<double> inlier_fraction;
};

/// Weighted mean of poses in the tangent space around the first pose.
inline RigidPose average_poses(const std::vector<RigidPose>& poses, const std::vector<double>& weights) {
  if (poses.size() == 1) return poses.front();
  const RigidPose& ref = poses.front();
  const RigidPose ref_inv = ref.inverse();
  Eigen::Vector3d w_sum = Eigen::Vector3d::Zero(), t_sum = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const RigidPose delta = ref_inv * poses[k];
    w_sum += weights[k] * so3_log(delta.rotation);
    t_sum += weights[k] * delta.translation;
    total += weights[k];
  }
  RigidPose delta;
  delta.rotation = so3_exp(w_sum / total);
  delta.translation = t_sum / total;
  RigidPose out = ref * delta;
  out.orthonormalize();
  return out;
}

namespace detail {

inline SceneSequence align_with_masks(const SceneSequence& seq, const IcpConfig& cfg,
                                      const std::vector<MaskRaster>* exclude, AlignmentReport* report,
                                      unsigned jobs) {
  cfg.validate();
  if (seq.size() < 2) throw ConfigError("align: at least two frames required");
  seq.validate();

  std::vector<PointCloud> clouds(seq.size());
  parallel_for(seq.size(), jobs, [&](std::size_t i) {
    clouds[i] = icp_cloud(seq.frames[i], cfg, exclude ? &(*exclude)[i] : nullptr);
  });

  SceneSequence out = seq;
  std::vector<RigidPose> poses(seq.size());
  AlignmentReport rep;
  rep.rms.assign(seq.size(), 0.0);
  rep.inlier_fraction.assign(seq.size(), 1.0);

  for (std::size_t i = 1; i < seq.size(); ++i) {
    // Constant-velocity prediction.
    RigidPose predicted = poses[i - 1];
    if (i >= 2) predicted = poses[i - 1] * (poses[i - 2].inverse() * poses[i - 1]);

    const std::size_t first = i > static_cast<std::size_t>(cfg.neighbor_span) ? i - cfg.neighbor_span : 0;
    const std::size_t count = i - first;
    std::vector<RigidPose> candidates(count);
    std::vector<double> weights(count), rms(count), inliers(count);
    // Candidate 0 is the nearest neighbor (i - 1), used as the averaging reference.
    parallel_for(count, jobs, [&](std::size_t k) {
      const std::size_t j = i - 1 - k;
      const IcpResult r = icp_pairwise(clouds[i], clouds[j], poses[j].inverse() * predicted, cfg);
      candidates[k] = poses[j] * r.pose;
      rms[k] = r.rms;
      inliers[k] = r.inlier_fraction;
      weights[k] = 1.0 / (r.rms * r.rms + 1e-6);
    });
    poses[i] = average_poses(candidates, weights);
    double wsum = 0.0, rsum = 0.0, isum = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      wsum += weights[k];
      rsum += weights[k] * rms[k];
      isum += weights[k] * inliers[k];
    }
    rep.rms[i] = rsum / wsum;
    rep.inlier_fraction[i] = isum / wsum;
  }
  for (std::size_t i = 0; i < seq.size(); ++i) out.frames[i].pose = poses[i];
  if (report) *report = std::move(rep);
  return out;
}

}  // namespace detail

/// Frame 0 is the identity; every later frame is aligned against up to
/// neighbor_span previous frames and the candidates are fused by
/// residual-weighted tangent-space averaging.
inline SceneSequence align_sequence(const SceneSequence& seq, const IcpConfig& cfg, AlignmentReport* report = nullptr,
                                    unsigned jobs = 1) {
  return detail::align_with_masks(seq, cfg, nullptr, report, jobs);
}

/// Same as align_sequence, with pixels labeled smeared excluded from ICP.
inline SceneSequence refine_with_labels(const SceneSequence& seq, const std::vector<LabelMap>& labels,
                                        const IcpConfig& cfg, AlignmentReport* report = nullptr, unsigned jobs = 1) {
  if (labels.size() != seq.size()) throw DataError("refine: one label map per frame required");
  std::vector<MaskRaster> exclude;
  exclude.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].label.same_shape(seq.frames[i].depth)) throw DataError("refine: label map size mismatch");
    MaskRaster m(labels[i].width(), labels[i].height(), 0);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = labels[i].label[k] == static_cast<std::uint8_t>(Label::Smeared);
    exclude.push_back(std::move(m));
  }
  return detail::align_with_masks(seq, cfg, &exclude, report, jobs);
}

}  // namespace smear
