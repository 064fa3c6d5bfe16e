#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "smear/core/error.hpp"
#include "smear/geometry.hpp"

namespace smear::io {

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Writes x, y, z (float, mm) and the source frame id (int) per vertex.
inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "ply\n"
      << (format == PlyFormat::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nproperty int frame\nend_header\n";
  if (format == PlyFormat::Ascii) {
    char line[128];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      std::snprintf(line, sizeof line, "%.3f %.3f %.3f %d\n", static_cast<float>(p.x()), static_cast<float>(p.y()),
                    static_cast<float>(p.z()), cloud.source_pixel[i].frame_id);
      out << line;
    }
  } else {
    static_assert(sizeof(float) == 4 && sizeof(std::int32_t) == 4);
    std::vector<char> buf(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const float xyz[3] = {static_cast<float>(cloud.points[i].x()), static_cast<float>(cloud.points[i].y()),
                            static_cast<float>(cloud.points[i].z())};
      const std::int32_t id = cloud.source_pixel[i].frame_id;
      // Host is little-endian on every supported target.
      std::memcpy(buf.data() + 16 * i, xyz, 12);
      std::memcpy(buf.data() + 16 * i + 12, &id, 4);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

/// Reads back files produced by write_ply (either format).
inline PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string line;
  std::size_t count = 0;
  bool binary = false;
  while (std::getline(in, line)) {
    if (line.rfind("format binary_little_endian", 0) == 0) binary = true;
    if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
    if (line == "end_header") break;
  }
  PointCloud cloud;
  cloud.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    float xyz[3];
    std::int32_t id = 0;
    if (binary) {
      in.read(reinterpret_cast<char*>(xyz), 12);
      in.read(reinterpret_cast<char*>(&id), 4);
    } else {
      in >> xyz[0] >> xyz[1] >> xyz[2] >> id;
    }
    if (!in) throw DataError("truncated PLY: " + path.string());
    cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    cloud.source_pixel.push_back({id, -1, -1});
  }
  return cloud;
}

}  // namespace smear::io
