#pragma once

// Training-set export: frames center-cropped to a square and resampled by
// nearest neighbor, with labels, evidence flags and class weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "smear/annotator.hpp"
#include "smear/core/types.hpp"
#include "smear/geometry.hpp"
#include "smear/io/dataset.hpp"
#include "smear/io/png.hpp"

namespace smear {

inline constexpr int kExportSize = 512;

enum EvidenceBit : std::uint8_t { kBitValid = 1, kBitBehind = 2, kBitEmpty = 4 };

/// Largest centered square of a width x height image.
struct SquareCrop {
  int x0 = 0;
  int y0 = 0;
  int side = 0;
};

inline SquareCrop center_crop(int width, int height) {
  const int side = std::min(width, height);
  return {(width - side) / 2, (height - side) / 2, side};
}

/// Center crop to a square, then nearest-neighbor resample to size x size.
/// Output values are always a subset of the input values.
template <typename T>
Raster<T> resample_nearest(const Raster<T>& in, int size = kExportSize) {
  if (size < 1) throw ConfigError("resample: size must be positive");
  if (in.width() < 1 || in.height() < 1) throw DataError("resample: empty raster");
  const SquareCrop crop = center_crop(in.width(), in.height());
  Raster<T> out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = crop.y0 + std::min(crop.side - 1, static_cast<int>((y + 0.5) * crop.side / size));
    for (int x = 0; x < size; ++x) {
      const int sx = crop.x0 + std::min(crop.side - 1, static_cast<int>((x + 0.5) * crop.side / size));
      out(x, y) = in(sx, sy);
    }
  }
  return out;
}

inline MaskRaster evidence_bits(const EvidenceMap& ev) {
  MaskRaster out(ev.width(), ev.height(), 0);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>((ev.v[i] ? kBitValid : 0) | (ev.b[i] ? kBitBehind : 0) |
                                       (ev.e[i] ? kBitEmpty : 0));
  return out;
}

inline EvidenceCounts count_evidence_bits(const MaskRaster& bits) {
  EvidenceCounts c;
  for (std::uint8_t x : bits) {
    c.v += (x & kBitValid) != 0;
    c.b += (x & kBitBehind) != 0;
    c.e += (x & kBitEmpty) != 0;
  }
  return c;
}

inline Raster<std::uint16_t> quantize_unit(const FloatRaster& r) {
  Raster<std::uint16_t> out(r.width(), r.height(), 0);
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = io::quantize_confidence(r[i]);
  return out;
}

/// One frame's annotation as stored next to a dataset.
struct FrameAnnotation {
  LabelMap labels;
  /// Evidence bitmask after conflict resolution (kBitValid | kBitBehind | kBitEmpty).
  MaskRaster evidence;
};

inline void save_evidence(const MaskRaster& bits, const std::filesystem::path& dir, int frame_id) {
  io::ensure_dir(dir);
  io::write_png8(dir / (io::frame_stem(frame_id) + ".evidence.png"), bits);
}

inline MaskRaster load_evidence(const std::filesystem::path& dir, int frame_id) {
  const auto path = dir / (io::frame_stem(frame_id) + ".evidence.png");
  if (!std::filesystem::exists(path)) throw DataError("missing evidence raster: " + path.string());
  return io::read_png8(path);
}

/// Writes depth/, omega/, labels/ (+ .conf.png), evidence/ and, when given,
/// gt/ rasters at size x size plus manifest.json. Class weights are counted
/// over the exported evidence.
inline nlohmann::json export_dataset(const SceneSequence& seq, const std::vector<FrameAnnotation>& annotations,
                                     const std::vector<std::optional<MaskRaster>>& ground_truth,
                                     const AnnotatorConfig& cfg, const std::filesystem::path& out_dir,
                                     int size = kExportSize) {
  cfg.validate();
  seq.validate();
  if (seq.size() == 0) throw DataError("export: empty sequence");
  if (annotations.size() != seq.size()) throw DataError("export: one annotation per frame required");
  if (!ground_truth.empty() && ground_truth.size() != seq.size())
    throw DataError("export: one ground-truth entry per frame required");

  for (const char* sub : {"depth", "omega", "labels", "evidence"}) io::ensure_dir(out_dir / sub);
  if (!ground_truth.empty()) io::ensure_dir(out_dir / "gt");

  EvidenceCounts counts;
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t f = 0; f < seq.size(); ++f) {
    const DepthFrame& frame = seq.frames[f];
    const FrameAnnotation& a = annotations[f];
    a.labels.validate();
    if (!a.labels.label.same_shape(frame.depth) || !a.evidence.same_shape(frame.depth))
      throw DataError("export: annotation size mismatch in frame " + std::to_string(frame.frame_id));
    const std::string stem = io::frame_stem(frame.frame_id);

    io::write_png16(out_dir / "depth" / (stem + ".png"), resample_nearest(frame.depth, size));
    io::write_png16(out_dir / "omega" / (stem + ".png"), quantize_unit(resample_nearest(omega_map(frame), size)));
    LabelMap labels;
    labels.label = resample_nearest(a.labels.label, size);
    labels.confidence = resample_nearest(a.labels.confidence, size);
    io::save_labels(labels, out_dir / "labels", frame.frame_id);
    const MaskRaster bits = resample_nearest(a.evidence, size);
    io::write_png8(out_dir / "evidence" / (stem + ".png"), bits);
    counts += count_evidence_bits(bits);

    nlohmann::json entry{{"frame_id", frame.frame_id}, {"depth", "depth/" + stem + ".png"},
                         {"omega", "omega/" + stem + ".png"}, {"label", "labels/" + stem + ".png"},
                         {"confidence", "labels/" + stem + ".conf.png"},
                         {"evidence", "evidence/" + stem + ".png"}};
    if (!ground_truth.empty() && ground_truth[f]) {
      io::write_png8(out_dir / "gt" / (stem + ".png"), resample_nearest(*ground_truth[f], size));
      entry["gt"] = "gt/" + stem + ".png";
    }
    frames.push_back(std::move(entry));
  }

  const CameraModel& cam = seq.frames.front().camera;
  const SquareCrop crop = center_crop(cam.width, cam.height);
  nlohmann::json manifest{
      {"format", "smear-export"},
      {"version", 1},
      {"size", size},
      {"source", {{"width", cam.width}, {"height", cam.height}}},
      {"crop", {{"x0", crop.x0}, {"y0", crop.y0}, {"side", crop.side}}},
      {"resample", "nearest"},
      {"depth_unit", "mm"},
      {"omega_scale", 65535},
      {"confidence_scale", 65535},
      {"labels", {{"unknown", 0}, {"valid", 1}, {"smeared", 2}}},
      {"evidence_bits", {{"v", int(kBitValid)}, {"b", int(kBitBehind)}, {"e", int(kBitEmpty)}}},
      {"flag_counts", {{"v", counts.v}, {"b", counts.b}, {"e", counts.e}}},
      {"alpha", cfg.alpha},
      {"beta", cfg.beta},
      {"frames", std::move(frames)}};
  manifest["weights"] = counts.total() > 0 ? weights_to_json(class_weights(counts)) : nlohmann::json(nullptr);
  io::write_json(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace smear
