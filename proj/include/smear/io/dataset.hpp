#pragma once

// Dataset directory layout:
//
//   intrinsics.json          fx, fy, cx, cy, width, height, depth_unit ("mm")
//   depth/NNNNNN.png         16-bit depth in millimeters, 0 = no return
//   poses/NNNNNN.json        optional camera-to-world pose
//   gt/NNNNNN.png            optional ternary ground truth (0/1/2)
//   labels/NNNNNN.png        ternary labels written by the annotator
//   labels/NNNNNN.conf.png   16-bit quantized confidence

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "smear/core/types.hpp"
#include "smear/io/png.hpp"

namespace smear::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string frame_stem(int frame_id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", frame_id);
  return buf;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw DataError("malformed JSON in " + path.string() + ": " + ex.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory: " + dir.string());
}

// Intrinsics ---------------------------------------------------------------

inline CameraModel read_intrinsics(const fs::path& dir, std::map<std::string, std::string>* manifest = nullptr) {
  const fs::path path = dir / "intrinsics.json";
  if (!fs::exists(path)) throw DataError("missing intrinsics manifest: " + path.string());
  const json j = read_json(path);
  CameraModel cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
  } catch (const json::exception& ex) {
    throw DataError("malformed intrinsics manifest: " + std::string(ex.what()));
  }
  if (j.contains("depth_unit") && j["depth_unit"] != "mm") throw DataError("unsupported depth_unit (expected mm)");
  try {
    cam.validate();
  } catch (const ConfigError& ex) {
    throw DataError(ex.what());
  }
  if (manifest) {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.value().is_string()) (*manifest)[it.key()] = it.value().get<std::string>();
  }
  return cam;
}

inline void write_intrinsics(const fs::path& dir, const CameraModel& cam,
                             const std::map<std::string, std::string>& manifest = {}) {
  json j;
  for (const auto& [k, v] : manifest) j[k] = v;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  j["depth_unit"] = "mm";
  write_json(dir / "intrinsics.json", j);
}

// Poses ------------------------------------------------------------------

inline json pose_to_json(const RigidPose& pose) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
  return json{{"rotation", rot},
              {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
              {"convention", "camera_to_world"}};
}

inline RigidPose pose_from_json(const json& j, const std::string& where) {
  RigidPose pose;
  try {
    const auto& rot = j.at("rotation");
    const auto& t = j.at("translation");
    if (!rot.is_array() || rot.size() != 9 || !t.is_array() || t.size() != 3)
      throw DataError("malformed pose file " + where + ": expected 9 rotation and 3 translation values");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot.at(static_cast<std::size_t>(3 * r + c)).get<double>();
    for (int i = 0; i < 3; ++i) pose.translation(i) = t.at(static_cast<std::size_t>(i)).get<double>();
  } catch (const json::exception& ex) {
    throw DataError("malformed pose file " + where + ": " + ex.what());
  }
  if (j.contains("convention") && j["convention"] != "camera_to_world")
    throw DataError("malformed pose file " + where + ": unsupported convention");
  if (!pose.is_valid(1e-6)) throw DataError("malformed pose file " + where + ": rotation is not orthonormal");
  return pose;
}

inline RigidPose read_pose(const fs::path& path) { return pose_from_json(read_json(path), path.string()); }

inline void write_pose(const fs::path& path, const RigidPose& pose) { write_json(path, pose_to_json(pose)); }

inline void write_poses(const fs::path& dir, const SceneSequence& seq, const std::string& subdir = "poses") {
  ensure_dir(dir / subdir);
  for (const auto& f : seq.frames)
    if (f.pose) write_pose(dir / subdir / (frame_stem(f.frame_id) + ".json"), *f.pose);
}

// Sequences ----------------------------------------------------------------

/// Frame ids present in `dir/depth`, ascending.
inline std::vector<int> list_frame_ids(const fs::path& dir, const std::string& subdir = "depth") {
  const fs::path d = dir / subdir;
  if (!fs::is_directory(d)) throw DataError("missing directory: " + d.string());
  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(d)) {
    const fs::path p = entry.path();
    if (p.extension() != ".png") continue;
    const std::string stem = p.stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
      continue;
    ids.push_back(std::stoi(stem));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// Loads a dataset directory. Either every frame satisfies its invariants and
/// a complete sequence is returned, or an exception is thrown.
inline SceneSequence load_sequence(const fs::path& dir) {
  SceneSequence seq;
  const CameraModel cam = read_intrinsics(dir, &seq.manifest);
  for (int id : list_frame_ids(dir)) {
    DepthFrame frame;
    frame.frame_id = id;
    frame.camera = cam;
    frame.depth = read_png16(dir / "depth" / (frame_stem(id) + ".png"));
    if (!frame.depth.same_shape(cam.width, cam.height))
      throw DataError("frame " + std::to_string(id) + ": dimension mismatch between depth raster and intrinsics");
    const fs::path pose_path = dir / "poses" / (frame_stem(id) + ".json");
    if (fs::exists(pose_path)) frame.pose = read_pose(pose_path);
    seq.frames.push_back(std::move(frame));
  }
  if (seq.frames.empty()) throw DataError("no depth frames in " + (dir / "depth").string());
  seq.validate();
  return seq;
}

inline void save_sequence(const fs::path& dir, const SceneSequence& seq) {
  if (seq.frames.empty()) throw DataError("cannot save an empty sequence");
  seq.validate();
  ensure_dir(dir / "depth");
  write_intrinsics(dir, seq.camera(), seq.manifest);
  for (const auto& f : seq.frames) write_png16(dir / "depth" / (frame_stem(f.frame_id) + ".png"), f.depth);
  bool any_pose = false;
  for (const auto& f : seq.frames) any_pose = any_pose || f.posed();
  if (any_pose) write_poses(dir, seq);
}

// Labels -------------------------------------------------------------------

inline std::uint16_t quantize_confidence(float c) {
  const double clamped = std::clamp(static_cast<double>(c), 0.0, 1.0);
  return static_cast<std::uint16_t>(std::lround(clamped * 65535.0));
}

inline float dequantize_confidence(std::uint16_t q) { return static_cast<float>(q / 65535.0); }

inline void save_labels(const LabelMap& labels, const fs::path& dir, int frame_id) {
  labels.validate();
  ensure_dir(dir);
  Raster<std::uint16_t> conf(labels.width(), labels.height());
  for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = quantize_confidence(labels.confidence[i]);
  write_png8(dir / (frame_stem(frame_id) + ".png"), labels.label);
  write_png16(dir / (frame_stem(frame_id) + ".conf.png"), conf);
}

inline LabelMap load_labels(const fs::path& dir, int frame_id) {
  LabelMap out;
  out.label = read_png8(dir / (frame_stem(frame_id) + ".png"));
  const fs::path conf_path = dir / (frame_stem(frame_id) + ".conf.png");
  if (fs::exists(conf_path)) {
    const auto conf = read_png16(conf_path);
    if (!conf.same_shape(out.label)) throw DataError("confidence raster size mismatch: " + conf_path.string());
    out.confidence = FloatRaster(conf.width(), conf.height());
    for (std::size_t i = 0; i < conf.size(); ++i) out.confidence[i] = dequantize_confidence(conf[i]);
  } else {
    out.confidence = FloatRaster(out.label.width(), out.label.height(), 0.0f);
    for (std::size_t i = 0; i < out.label.size(); ++i)
      if (out.label[i] != 0) out.confidence[i] = 1.0f;
  }
  out.validate();
  return out;
}

inline MaskRaster load_ground_truth(const fs::path& dir, int frame_id) {
  MaskRaster gt = read_png8(dir / "gt" / (frame_stem(frame_id) + ".png"));
  for (auto v : gt)
    if (v > 2) throw DataError("ground truth label out of range in frame " + std::to_string(frame_id));
  return gt;
}

inline void save_ground_truth(const fs::path& dir, int frame_id, const MaskRaster& gt) {
  ensure_dir(dir / "gt");
  write_png8(dir / "gt" / (frame_stem(frame_id) + ".png"), gt);
}

}  // namespace smear::io
