#pragma once

// Classical smeared-point detectors used as baselines: a depth-map median
// filter and a point-cloud statistical outlier filter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "smear/core/types.hpp"
#include "smear/geometry.hpp"
#include "smear/kdtree.hpp"

namespace smear {

/// 1 where |depth - median of the nonzero k x k neighborhood| > tau_mm.
inline FloatRaster median_filter(const DepthFrame& frame, int k = 5, double tau_mm = 20.0) {
  if (k < 1 || k % 2 == 0) throw ConfigError("median filter: kernel size must be odd");
  const auto& depth = frame.depth;
  FloatRaster score(depth.width(), depth.height(), 0.0f);
  const int r = k / 2;
  std::vector<std::uint16_t> window;
  window.reserve(static_cast<std::size_t>(k * k));
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const std::uint16_t d = depth(u, v);
      if (d == 0) continue;
      window.clear();
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du)
          if (depth.contains(u + du, v + dv) && depth(u + du, v + dv) != 0) window.push_back(depth(u + du, v + dv));
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      if (std::abs(static_cast<double>(d) - static_cast<double>(*mid)) > tau_mm) score(u, v) = 1.0f;
    }
  }
  return score;
}

/// 1 for points whose mean distance to their n nearest neighbors exceeds
/// mean + std_ratio * std of that statistic over the cloud.
inline std::vector<float> statistical_outlier_filter(const PointCloud& cloud, int n_neighbors = 20,
                                                     double std_ratio = 2.0) {
  if (n_neighbors < 1) throw ConfigError("statistical filter: n_neighbors must be >= 1");
  if (cloud.size() < static_cast<std::size_t>(n_neighbors) + 1)
    throw DataError("statistical filter: cloud smaller than n_neighbors + 1");
  const KdTree tree(cloud.points);
  std::vector<double> mean_dist(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nn = tree.knn(cloud.points[i], static_cast<std::size_t>(n_neighbors) + 1);
    double sum = 0.0;
    int used = 0;
    for (const auto& n : nn) {
      if (n.index == i || used == n_neighbors) continue;
      sum += std::sqrt(n.squared_distance);
      ++used;
    }
    mean_dist[i] = sum / used;
  }
  double mean = 0.0;
  for (double d : mean_dist) mean += d;
  mean /= static_cast<double>(mean_dist.size());
  double var = 0.0;
  for (double d : mean_dist) var += (d - mean) * (d - mean);
  const double stddev = mean_dist.size() > 1 ? std::sqrt(var / static_cast<double>(mean_dist.size() - 1)) : 0.0;
  const double limit = mean + std_ratio * stddev;
  std::vector<float> score(cloud.size(), 0.0f);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (mean_dist[i] > limit) score[i] = 1.0f;
  return score;
}

/// Statistical filter applied to one frame's camera-frame cloud, scattered back to pixels.
inline FloatRaster statistical_filter_frame(const DepthFrame& frame, int n_neighbors = 20, double std_ratio = 2.0) {
  const PointCloud cloud = backproject(frame, Frame::Camera);
  FloatRaster score(frame.depth.width(), frame.depth.height(), 0.0f);
  if (cloud.size() < static_cast<std::size_t>(n_neighbors) + 1) return score;
  const auto s = statistical_outlier_filter(cloud, n_neighbors, std_ratio);
  for (std::size_t i = 0; i < cloud.size(); ++i) score(cloud.source_pixel[i].u, cloud.source_pixel[i].v) = s[i];
  return score;
}

}  // namespace smear
