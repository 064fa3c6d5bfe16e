#pragma once

// Self-annotation of depth frames. Every pixel of a target frame is checked
// against the rendered depth of each reference frame in a window around it:
//
//   |k| < epsilon          valid (seen consistently from another viewpoint)
//   k < -delta             see-through behind (the reference ray passes the point)
//   reference has no return see-through empty
//
// with k = (pixel depth in the reference camera) - (reference rendered depth).
// Flags are OR-ed over references and fused into ternary labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smear/core/types.hpp"
#include "smear/geometry.hpp"
#include "smear/parallel.hpp"

namespace smear {

/// Largest Chebyshev radius probed for empty neighborhoods.
inline constexpr int kMaxEmptyRadius = 32;

/// Reference frame indices for target index f: m/2 on each side, truncated at
/// the sequence ends. If truncation leaves fewer than two references, frames
/// from the other side are borrowed until two are available.
inline std::vector<std::size_t> reference_frames(std::size_t n, std::size_t f, int m) {
  const auto half = static_cast<std::ptrdiff_t>(m / 2);
  const auto nf = static_cast<std::ptrdiff_t>(n);
  const auto fi = static_cast<std::ptrdiff_t>(f);
  std::vector<std::size_t> refs;
  for (std::ptrdiff_t g = fi - half; g <= fi + half; ++g)
    if (g != fi && g >= 0 && g < nf) refs.push_back(static_cast<std::size_t>(g));
  for (std::ptrdiff_t extra = half + 1; refs.size() < 2 && (fi - extra >= 0 || fi + extra < nf); ++extra) {
    if (fi - extra >= 0) refs.insert(refs.begin(), static_cast<std::size_t>(fi - extra));
    if (refs.size() < 2 && fi + extra < nf) refs.push_back(static_cast<std::size_t>(fi + extra));
  }
  if (refs.size() < 2) throw GeometryError("annotate: fewer than two reference frames available");
  return refs;
}

/// Self-render of a posed frame into its own camera (d_g^(g) for reference g).
inline Raster<double> self_render(const DepthFrame& frame) {
  return render_depth(backproject(frame, Frame::World), frame.camera, frame.require_pose()).depth;
}

namespace detail {

struct PixelOutcome {
  enum Kind : std::uint8_t { None, Valid, WeakValid, Behind, Empty } kind = None;
  std::uint8_t clearance = 0;
};

/// Radius+1 of the largest all-empty square around (u, v) that fits in the image.
inline std::uint8_t empty_clearance(const Raster<double>& ref, int u, int v) {
  int r = 0;
  for (; r < kMaxEmptyRadius; ++r) {
    const int next = r + 1;
    if (u - next < 0 || v - next < 0 || u + next >= ref.width() || v + next >= ref.height()) break;
    bool empty = true;
    for (int k = -next; k <= next && empty; ++k) {
      empty = ref(u + k, v - next) == 0.0 && ref(u + k, v + next) == 0.0 && ref(u - next, v + k) == 0.0 &&
              ref(u + next, v + k) == 0.0;
    }
    if (!empty) break;
  }
  return static_cast<std::uint8_t>(r + 1);
}

/// Relative depth span below which a reference neighborhood counts as one surface.
inline constexpr double kSmoothSpan = 0.05;

/// Nearest and farthest return in the (2r+1)^2 neighborhood of (u, v); hi = 0 if none.
inline std::pair<double, double> return_span(const Raster<double>& ref, int u, int v, int r) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du) {
      if (!ref.contains(u + du, v + dv)) continue;
      const double d = ref(u + du, v + dv);
      if (d == 0.0) continue;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  return {lo, hi};
}

/// Classifies one projected pixel against a reference render. Agreement
/// found where the reference neighborhood spans a depth discontinuity is
/// weak, since that reference return may itself be smeared.
inline PixelOutcome classify(const ProjectedPixel& p, const Raster<double>& ref, const AnnotatorConfig& cfg) {
  PixelOutcome out;
  const int iu = nearest_pixel(p.u), iv = nearest_pixel(p.v);
  const double nearest = ref(iu, iv);
  if (nearest == 0.0) {
    out.kind = PixelOutcome::Empty;
    out.clearance = empty_clearance(ref, iu, iv);
    return out;
  }
  const auto [lo, hi] = return_span(ref, iu, iv, 1);
  const auto agree = hi - lo <= kSmoothSpan * lo ? PixelOutcome::Valid : PixelOutcome::WeakValid;

  const double eps = cfg.epsilon_at(p.depth);
  const double k = p.depth - nearest;
  if (std::abs(k) < eps) {
    out.kind = agree;
    return out;
  }
  // On a single surface the bilinear depth at the subpixel position stands in
  // for the nearest sample (grazing surfaces change depth quickly across a pixel).
  const int u0 = std::clamp(static_cast<int>(std::floor(p.u)), 0, ref.width() - 1);
  const int v0 = std::clamp(static_cast<int>(std::floor(p.v)), 0, ref.height() - 1);
  const int u1 = std::min(u0 + 1, ref.width() - 1), v1 = std::min(v0 + 1, ref.height() - 1);
  const double fu = std::clamp(p.u - u0, 0.0, 1.0), fv = std::clamp(p.v - v0, 0.0, 1.0);
  const double q[4] = {ref(u0, v0), ref(u1, v0), ref(u0, v1), ref(u1, v1)};
  const auto [qlo, qhi] = std::minmax({q[0], q[1], q[2], q[3]});
  if (qlo > 0.0 && qhi - qlo <= kSmoothSpan * qlo) {
    const double interp = (1 - fv) * ((1 - fu) * q[0] + fu * q[1]) + fv * ((1 - fu) * q[2] + fu * q[3]);
    if (std::abs(p.depth - interp) < eps) {
      out.kind = agree;
      return out;
    }
  }
  // Every return around the projection must lie behind the point.
  if (k < -cfg.delta_mm && lo > p.depth + cfg.delta_mm) out.kind = PixelOutcome::Behind;
  return out;
}

/// Angle (radians, clamped to pi/2) between the rays from two camera centers to x.
inline double ray_angle(const Eigen::Vector3d& x, const Eigen::Vector3d& c1, const Eigen::Vector3d& c2) {
  const Eigen::Vector3d a = (x - c1).normalized(), b = (x - c2).normalized();
  const double angle = std::atan2(a.cross(b).norm(), a.dot(b));
  return std::min(angle, std::numbers::pi / 2.0);
}

struct WindowResult {
  EvidenceMap evidence;
  /// Max ray angle over validating references (radians).
  Raster<double> theta;
};

inline WindowResult evaluate_window(const SceneSequence& seq, std::size_t f, const AnnotatorConfig& cfg,
                                    const std::vector<Raster<double>>* self_renders) {
  cfg.validate();
  if (f >= seq.size()) throw ConfigError("annotate: frame index out of range");
  const DepthFrame& target = seq.frames[f];
  target.require_pose();
  const auto refs = reference_frames(seq.size(), f, cfg.m);
  for (std::size_t g : refs) seq.frames[g].require_pose();

  const CameraModel& cam = target.camera;
  WindowResult out{EvidenceMap(cam.width, cam.height), Raster<double>(cam.width, cam.height, 0.0)};
  const RigidPose& pose_f = *target.pose;
  // Weak agreements: two make a valid observation; a single one only vetoes
  // smeared evidence.
  Raster<std::uint8_t> weak(cam.width, cam.height, 0);
  Raster<double> weak_theta(cam.width, cam.height, 0.0);

  for (std::size_t g : refs) {
    const DepthFrame& ref_frame = seq.frames[g];
    const Raster<double> rendered = self_renders ? (*self_renders)[g] : self_render(ref_frame);
    const auto index = reproject_index(target, ref_frame);
    const Eigen::Vector3d center_g = ref_frame.pose->center();
    for (int v = 0; v < cam.height; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        const ProjectedPixel& p = index(u, v);
        if (!p.in_frame) continue;
        const PixelOutcome o = classify(p, rendered, cfg);
        const auto angle = [&] {
          const Eigen::Vector3d x = pose_f * (static_cast<double>(target.depth(u, v)) * cam.ray(u, v));
          return ray_angle(x, pose_f.center(), center_g);
        };
        switch (o.kind) {
          case PixelOutcome::Valid:
            out.evidence.v(u, v) = 1;
            out.theta(u, v) = std::max(out.theta(u, v), angle());
            break;
          case PixelOutcome::WeakValid:
            ++weak(u, v);
            weak_theta(u, v) = std::max(weak_theta(u, v), angle());
            break;
          case PixelOutcome::Behind:
            out.evidence.b(u, v) = 1;
            break;
          case PixelOutcome::Empty:
            out.evidence.e(u, v) = 1;
            out.evidence.empty_clearance(u, v) = std::max(out.evidence.empty_clearance(u, v), o.clearance);
            break;
          case PixelOutcome::None:
            break;
        }
      }
    }
  }
  auto& ev = out.evidence;
  for (std::size_t i = 0; i < weak.size(); ++i) {
    if (weak[i] >= 2) {
      ev.v[i] = 1;
      out.theta[i] = std::max(out.theta[i], weak_theta[i]);
    } else if (weak[i] == 1 && !ev.v[i]) {
      ev.b[i] = ev.e[i] = 0;
      ev.empty_clearance[i] = 0;
    }
  }
  return out;
}

}  // namespace detail

/// Evidence flags (v, b, e) for frame index f; confidence is left at zero.
inline EvidenceMap gather_evidence(const SceneSequence& seq, std::size_t f, const AnnotatorConfig& cfg) {
  return detail::evaluate_window(seq, f, cfg, nullptr).evidence;
}

/// c = sin^2(theta) on valid pixels, theta being the widest angle between the
/// target ray and a validating reference ray.
inline double confidence_from_angle(double theta_rad) {
  const double s = std::sin(std::min(theta_rad, std::numbers::pi / 2.0));
  return s * s;
}

inline EvidenceMap confidence(const SceneSequence& seq, std::size_t f, const EvidenceMap& evidence,
                              const AnnotatorConfig& cfg) {
  const auto window = detail::evaluate_window(seq, f, cfg, nullptr);
  EvidenceMap out = evidence;
  for (std::size_t i = 0; i < out.c.size(); ++i)
    out.c[i] = out.v[i] ? static_cast<float>(confidence_from_angle(window.theta[i])) : 0.0f;
  return out;
}

/// Keeps e = 1 only where some reference saw an all-empty window x window
/// neighborhood around the projected pixel. window = 1 is the identity.
inline EvidenceMap filter_empty_evidence(const EvidenceMap& evidence, int window) {
  if (window < 1 || window % 2 == 0) throw ConfigError("window must be an odd integer >= 1");
  EvidenceMap out = evidence;
  const int radius = (window - 1) / 2;
  for (std::size_t i = 0; i < out.e.size(); ++i) {
    if (out.e[i] && out.empty_clearance[i] <= radius) {
      out.e[i] = 0;
      out.empty_clearance[i] = 0;
    }
  }
  return out;
}

/// Clears all flags on pixels where valid evidence conflicts with smeared evidence.
inline EvidenceMap resolve_conflicts(const EvidenceMap& evidence) {
  EvidenceMap out = evidence;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    if (out.v[i] && (out.b[i] || out.e[i])) {
      out.v[i] = out.b[i] = out.e[i] = 0;
      out.c[i] = 0.0f;
      out.empty_clearance[i] = 0;
    }
  }
  return out;
}

/// smeared: (b or e) and not v; valid: v only; unknown otherwise.
inline LabelMap fuse_labels(const EvidenceMap& evidence) {
  LabelMap out(evidence.width(), evidence.height());
  for (std::size_t i = 0; i < evidence.v.size(); ++i) {
    const bool v = evidence.v[i], s = evidence.b[i] || evidence.e[i];
    if (v && !s) {
      out.label[i] = static_cast<std::uint8_t>(Label::Valid);
      out.confidence[i] = std::clamp(evidence.c[i], 0.0f, 1.0f);
    } else if (s && !v) {
      out.label[i] = static_cast<std::uint8_t>(Label::Smeared);
      out.confidence[i] = 1.0f;
    }
  }
  return out;
}

// Class weights --------------------------------------------------------------

struct EvidenceCounts {
  std::uint64_t v = 0;
  std::uint64_t b = 0;
  std::uint64_t e = 0;

  EvidenceCounts& operator+=(const EvidenceCounts& o) {
    v += o.v;
    b += o.b;
    e += o.e;
    return *this;
  }
  std::uint64_t total() const { return v + b + e; }
};

inline EvidenceCounts count_evidence(const EvidenceMap& evidence) {
  EvidenceCounts c;
  for (std::size_t i = 0; i < evidence.v.size(); ++i) {
    c.v += evidence.v[i] != 0;
    c.b += evidence.b[i] != 0;
    c.e += evidence.e[i] != 0;
  }
  return c;
}

struct WeightSet {
  double w_b = 0.0;
  double w_e = 0.0;
  double w_v = 0.0;
};

/// w_k = 1 - |k|_0 / (|v|_0 + |b|_0 + |e|_0).
inline WeightSet class_weights(const EvidenceCounts& counts) {
  const std::uint64_t n = counts.total();
  if (n == 0) throw DataError("class weights: no labeled pixels");
  // (n - |k|) / n rounds once, so equal counts give exactly 2/3.
  const double total = static_cast<double>(n);
  return {static_cast<double>(n - counts.b) / total, static_cast<double>(n - counts.e) / total,
          static_cast<double>(n - counts.v) / total};
}

inline WeightSet class_weights(const std::vector<EvidenceMap>& corpus) {
  EvidenceCounts counts;
  for (const auto& ev : corpus) counts += count_evidence(ev);
  return class_weights(counts);
}

// Sequences ------------------------------------------------------------------

struct FrameStats {
  int frame_id = 0;
  std::uint64_t measured = 0;
  std::uint64_t valid = 0;
  std::uint64_t smeared = 0;
  std::uint64_t unknown = 0;
  EvidenceCounts flags;
};

struct AnnotationStats {
  std::vector<FrameStats> frames;
  std::uint64_t measured = 0;
  std::uint64_t valid = 0;
  std::uint64_t smeared = 0;
  std::uint64_t unknown = 0;
  /// Flags after window filtering, before conflict resolution.
  EvidenceCounts raw_flags;
  /// Flags that survive conflict resolution (these drive the class weights).
  EvidenceCounts flags;
  std::optional<WeightSet> weights;

  double unknown_fraction() const {
    return measured ? static_cast<double>(unknown) / static_cast<double>(measured) : 1.0;
  }
};

struct Annotation {
  std::vector<LabelMap> labels;
  /// Filtered evidence with confidence, before conflict resolution.
  std::vector<EvidenceMap> evidence;
  AnnotationStats stats;
};

/// Per frame: evidence -> confidence -> empty-window filter -> fusion.
/// Frames are processed independently on up to `jobs` threads.
inline Annotation annotate_sequence(const SceneSequence& seq, const AnnotatorConfig& cfg, unsigned jobs = 1) {
  cfg.validate();
  if (!seq.fully_posed()) throw GeometryError("annotate: every frame needs a pose");
  seq.validate();
  const std::size_t n = seq.size();

  std::vector<Raster<double>> renders(n);
  parallel_for(n, jobs, [&](std::size_t g) { renders[g] = self_render(seq.frames[g]); });

  Annotation out;
  out.labels.resize(n);
  out.evidence.resize(n);
  std::vector<FrameStats> stats(n);
  parallel_for(n, jobs, [&](std::size_t f) {
    auto window = detail::evaluate_window(seq, f, cfg, &renders);
    EvidenceMap& ev = window.evidence;
    for (std::size_t i = 0; i < ev.c.size(); ++i)
      ev.c[i] = ev.v[i] ? static_cast<float>(confidence_from_angle(window.theta[i])) : 0.0f;
    ev = filter_empty_evidence(ev, cfg.window);
    out.labels[f] = fuse_labels(ev);

    FrameStats& s = stats[f];
    s.frame_id = seq.frames[f].frame_id;
    s.flags = count_evidence(resolve_conflicts(ev));
    for (std::size_t i = 0; i < ev.v.size(); ++i) {
      if (seq.frames[f].depth[i] == 0) continue;
      ++s.measured;
      switch (static_cast<Label>(out.labels[f].label[i])) {
        case Label::Valid: ++s.valid; break;
        case Label::Smeared: ++s.smeared; break;
        case Label::Unknown: ++s.unknown; break;
      }
    }
    out.evidence[f] = std::move(ev);
  });

  AnnotationStats& total = out.stats;
  for (std::size_t f = 0; f < n; ++f) {
    total.measured += stats[f].measured;
    total.valid += stats[f].valid;
    total.smeared += stats[f].smeared;
    total.unknown += stats[f].unknown;
    total.flags += stats[f].flags;
    total.raw_flags += count_evidence(out.evidence[f]);
  }
  total.frames = std::move(stats);
  if (total.flags.total() > 0) total.weights = class_weights(total.flags);
  return out;
}

inline nlohmann::json weights_to_json(const WeightSet& w) {
  return {{"w_b", w.w_b}, {"w_e", w.w_e}, {"w_v", w.w_v}};
}

inline nlohmann::json stats_to_json(const AnnotationStats& s, const AnnotatorConfig& cfg) {
  using nlohmann::json;
  auto counts = [](const EvidenceCounts& c) { return json{{"v", c.v}, {"b", c.b}, {"e", c.e}}; };
  json frames = json::array();
  for (const auto& f : s.frames) {
    frames.push_back({{"frame_id", f.frame_id},
                      {"measured", f.measured},
                      {"valid", f.valid},
                      {"smeared", f.smeared},
                      {"unknown", f.unknown},
                      {"flags", counts(f.flags)}});
  }
  json j{{"config",
          {{"epsilon_mm", cfg.epsilon_mm},
           {"delta_mm", cfg.delta_mm},
           {"window", cfg.window},
           {"m", cfg.m},
           {"alpha", cfg.alpha},
           {"beta", cfg.beta}}},
         {"measured", s.measured},
         {"valid", s.valid},
         {"smeared", s.smeared},
         {"unknown", s.unknown},
         {"unknown_fraction", s.unknown_fraction()},
         {"flags", counts(s.flags)},
         {"raw_flags", counts(s.raw_flags)},
         {"frames", frames}};
  j["weights"] = s.weights ? weights_to_json(*s.weights) : json(nullptr);
  return j;
}

}  // namespace smear
