#pragma once

// Multi-frame fusion: every posed frame is backprojected to world
// coordinates after an optional per-frame preprocessor removes pixels.

#include <optional>
#include <string>
#include <vector>

#include "smear/baselines.hpp"
#include "smear/core/types.hpp"
#include "smear/geometry.hpp"

namespace smear {

enum class FuseFilter { None, Median, Labels };

inline FuseFilter parse_fuse_filter(const std::string& s) {
  if (s == "none") return FuseFilter::None;
  if (s == "median") return FuseFilter::Median;
  if (s == "labels") return FuseFilter::Labels;
  throw ConfigError("unknown fuse filter: " + s);
}

struct FuseConfig {
  FuseFilter filter = FuseFilter::None;
  int median_kernel = 5;
  double median_tau_mm = 20.0;
};

/// Pixels of `frame` that survive the filter. Labels keeps valid pixels only.
inline MaskRaster fuse_keep_mask(const DepthFrame& frame, const FuseConfig& cfg, const LabelMap* labels) {
  MaskRaster keep(frame.depth.width(), frame.depth.height(), 0);
  for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = frame.depth[i] != 0;
  switch (cfg.filter) {
    case FuseFilter::None:
      break;
    case FuseFilter::Median: {
      const FloatRaster s = median_filter(frame, cfg.median_kernel, cfg.median_tau_mm);
      for (std::size_t i = 0; i < keep.size(); ++i)
        if (s[i] >= 0.5f) keep[i] = 0;
      break;
    }
    case FuseFilter::Labels:
      if (!labels) throw DataError("fuse: labels filter needs labels for frame " + std::to_string(frame.frame_id));
      if (!labels->label.same_shape(frame.depth)) throw DataError("fuse: label raster size mismatch");
      for (std::size_t i = 0; i < keep.size(); ++i)
        if (labels->label[i] != static_cast<std::uint8_t>(Label::Valid)) keep[i] = 0;
      break;
  }
  return keep;
}

/// Merged world-frame cloud. `labels` is indexed like seq.frames (may be
/// empty unless the filter is Labels).
inline PointCloud fuse_frames(const SceneSequence& seq, const FuseConfig& cfg,
                              const std::vector<LabelMap>& labels = {}) {
  seq.validate();
  if (!seq.fully_posed()) throw GeometryError("fuse: every frame needs a pose");
  if (cfg.filter == FuseFilter::Labels && labels.size() != seq.size())
    throw DataError("fuse: one label map per frame required");
  PointCloud out;
  for (std::size_t f = 0; f < seq.size(); ++f) {
    const DepthFrame& frame = seq.frames[f];
    const MaskRaster keep = fuse_keep_mask(frame, cfg, labels.empty() ? nullptr : &labels[f]);
    PointCloud cloud = backproject(frame, Frame::World);
    PointCloud kept;
    kept.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const SourcePixel& sp = cloud.source_pixel[i];
      if (!keep(sp.u, sp.v)) continue;
      kept.points.push_back(cloud.points[i]);
      kept.source_pixel.push_back(sp);
    }
    out.append(kept);
  }
  return out;
}

/// Fused points grouped by ground-truth class of their source pixel.
struct FusionTruthCounts {
  std::size_t valid = 0;
  std::size_t smeared = 0;
  std::size_t unknown = 0;
};

/// `truth` is indexed like seq.frames; cloud.source_pixel must refer to them.
inline FusionTruthCounts count_by_truth(const PointCloud& cloud, const SceneSequence& seq,
                                        const std::vector<MaskRaster>& truth) {
  if (truth.size() != seq.size()) throw DataError("fuse: one ground-truth mask per frame required");
  std::vector<int> index_of;
  for (std::size_t f = 0; f < seq.size(); ++f) {
    const int id = seq.frames[f].frame_id;
    if (id < 0) throw DataError("fuse: negative frame id");
    if (static_cast<std::size_t>(id) >= index_of.size()) index_of.resize(id + 1, -1);
    index_of[id] = static_cast<int>(f);
  }
  FusionTruthCounts c;
  for (const SourcePixel& sp : cloud.source_pixel) {
    if (sp.frame_id < 0 || static_cast<std::size_t>(sp.frame_id) >= index_of.size() || index_of[sp.frame_id] < 0)
      throw DataError("fuse: point from unknown frame " + std::to_string(sp.frame_id));
    switch (truth[index_of[sp.frame_id]](sp.u, sp.v)) {
      case 1: ++c.valid; break;
      case 2: ++c.smeared; break;
      default: ++c.unknown; break;
    }
  }
  return c;
}

}  // namespace smear
