// smearlab: simulate, align, annotate, baseline, evaluate, export, fuse.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "smear/smear.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smear;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

IcpConfig icp_config_from_json(const json& j) {
  IcpConfig c;
  try {
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.correspondence_radius_mm = j.value("correspondence_radius_mm", c.correspondence_radius_mm);
    c.initial_radius_mm = j.value("initial_radius_mm", c.initial_radius_mm);
    c.radius_decay = j.value("radius_decay", c.radius_decay);
    c.convergence_eps = j.value("convergence_eps", c.convergence_eps);
    c.neighbor_span = j.value("neighbor_span", c.neighbor_span);
    c.voxel_mm = j.value("voxel_mm", c.voxel_mm);
    c.normal_max_relative_jump = j.value("normal_max_relative_jump", c.normal_max_relative_jump);
    c.normal_window_radius = j.value("normal_window_radius", c.normal_window_radius);
    const std::string metric = j.value("metric", std::string("point_to_plane"));
    if (metric == "point_to_plane") c.metric = IcpMetric::PointToPlane;
    else if (metric == "point_to_point") c.metric = IcpMetric::PointToPoint;
    else throw ConfigError("icp config: unknown metric " + metric);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("icp config: ") + ex.what());
  }
  c.validate();
  return c;
}

IcpConfig load_icp_config(const std::string& path) {
  if (path.empty()) return IcpConfig{};
  if (!fs::exists(path)) throw ConfigError("icp config not found: " + path);
  try {
    return icp_config_from_json(io::read_json(path));
  } catch (const DataError& ex) {
    throw ConfigError(ex.what());
  }
}

std::vector<std::optional<MaskRaster>> load_truth_if_present(const fs::path& dir, const SceneSequence& seq) {
  std::vector<std::optional<MaskRaster>> gt;
  bool any = false;
  for (const auto& f : seq.frames) {
    if (fs::exists(dir / "gt" / (io::frame_stem(f.frame_id) + ".png"))) {
      gt.emplace_back(io::load_ground_truth(dir, f.frame_id));
      any = true;
    } else {
      gt.emplace_back();
    }
  }
  if (!any) gt.clear();
  return gt;
}

std::vector<FrameAnnotation> load_annotations(const fs::path& labels_dir, const SceneSequence& seq) {
  if (!fs::is_directory(labels_dir))
    throw DataError("no labels in " + labels_dir.string() + " (run `smearlab annotate` first)");
  std::vector<FrameAnnotation> out;
  for (const auto& f : seq.frames) {
    if (!fs::exists(labels_dir / (io::frame_stem(f.frame_id) + ".png")))
      throw DataError("missing labels for frame " + std::to_string(f.frame_id));
    FrameAnnotation a;
    a.labels = io::load_labels(labels_dir, f.frame_id);
    if (!a.labels.label.same_shape(f.depth)) throw DataError("label size mismatch in frame " + std::to_string(f.frame_id));
    a.evidence = load_evidence(labels_dir, f.frame_id);
    out.push_back(std::move(a));
  }
  return out;
}

// simulate ---------------------------------------------------------------------

struct SimulateArgs {
  std::string out_dir;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> frames;
  bool random = false;
  bool no_poses = false;
  unsigned jobs = 0;
};

int run_simulate(const SimulateArgs& a) {
  sim::SyntheticScene scene;
  if (!a.config.empty()) {
    if (!fs::exists(a.config)) throw ConfigError("scene config not found: " + a.config);
    json j;
    try {
      j = io::read_json(a.config);
    } catch (const DataError& ex) {
      throw ConfigError(ex.what());
    }
    if (a.seed) j["seed"] = *a.seed;
    if (a.frames) j["trajectory"]["frames"] = *a.frames;
    scene = sim::scene_from_json(j);
  } else {
    const std::uint64_t seed = a.seed.value_or(1);
    const int frames = a.frames.value_or(30);
    if (frames < 2) throw ConfigError("simulate: at least two frames required");
    scene = a.random ? sim::random_scene(seed, frames) : sim::default_scene(seed, frames);
  }
  const sim::SimulatedSequence s = sim::render_scene(scene, a.jobs);
  sim::write_dataset(a.out_dir, scene, s, !a.no_poses);
  std::size_t smeared = 0;
  for (const auto& m : s.smear_mask)
    for (auto v : m) smeared += v != 0;
  std::printf("wrote %zu frames to %s (%zu smeared pixels)\n", s.sequence.size(), a.out_dir.c_str(), smeared);
  return kExitOk;
}

// align ------------------------------------------------------------------------

struct AlignArgs {
  std::string dir;
  std::string icp_config;
  bool force = false;
  unsigned jobs = 0;
};

json pose_error_report(const fs::path& dir, const SceneSequence& seq) {
  const auto truth = sim::load_true_poses(dir, seq);
  if (!truth) return nullptr;
  // Estimated poses share frame 0 with the truth.
  const RigidPose anchor = truth->front() * seq.frames.front().pose->inverse();
  json frames = json::array();
  double max_rot = 0.0, max_trans = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const PoseError e = pose_error(anchor * *seq.frames[i].pose, (*truth)[i]);
    max_rot = std::max(max_rot, e.rotation_deg);
    max_trans = std::max(max_trans, e.translation_mm);
    frames.push_back({{"frame_id", seq.frames[i].frame_id}, {"rotation_deg", e.rotation_deg},
                      {"translation_mm", e.translation_mm}});
  }
  return {{"frames", frames}, {"max_rotation_deg", max_rot}, {"max_translation_mm", max_trans}};
}

int run_align(const AlignArgs& a) {
  const IcpConfig cfg = load_icp_config(a.icp_config);
  SceneSequence seq = io::load_sequence(a.dir);
  if (seq.size() < 2) throw ConfigError("align: at least two frames required");
  if (seq.fully_posed() && !a.force) {
    std::printf("all %zu frames already posed; use --force to recompute\n", seq.size());
    return kExitOk;
  }
  AlignmentReport rep;
  seq = align_sequence(seq, cfg, &rep, a.jobs);
  io::write_poses(a.dir, seq);

  json frames = json::array();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    std::printf("frame %6d  rms %.3f mm  inliers %.3f\n", seq.frames[i].frame_id, rep.rms[i], rep.inlier_fraction[i]);
    frames.push_back({{"frame_id", seq.frames[i].frame_id}, {"rms_mm", rep.rms[i]},
                      {"inlier_fraction", rep.inlier_fraction[i]}});
  }
  json report{{"frames", frames}};
  const json errors = pose_error_report(a.dir, seq);
  if (!errors.is_null()) {
    report["pose_error"] = errors;
    std::printf("pose error vs gt: max %.4f deg, %.3f mm\n", errors["max_rotation_deg"].get<double>(),
                errors["max_translation_mm"].get<double>());
  }
  io::write_json(fs::path(a.dir) / "align.json", report);
  return kExitOk;
}

// annotate ---------------------------------------------------------------------

struct AnnotateArgs {
  std::string dir;
  std::string out = "labels";
  AnnotatorConfig cfg;
  bool refine = false;
  std::string icp_config;
  bool sweep_m = false;
  bool sweep_window = false;
  unsigned jobs = 0;
};

json truth_summary(const Annotation& ann, const std::vector<std::optional<MaskRaster>>& gt) {
  if (gt.empty()) return nullptr;
  std::vector<FloatRaster> scores;
  std::vector<MaskRaster> truth;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (!gt[f]) continue;
    scores.push_back(label_scores(ann.labels[f]));
    truth.push_back(*gt[f]);
    const auto c = sim::evaluate_against_truth(ann.labels[f], *gt[f]);
    tp += c.true_positive;
    fp += c.false_positive;
    fn += c.false_negative;
  }
  const MapResult r = mean_average_precision(scores, truth);
  json j{{"true_positive", tp}, {"false_positive", fp}, {"false_negative", fn}};
  j["precision"] = tp + fp ? json(static_cast<double>(tp) / static_cast<double>(tp + fp)) : json(nullptr);
  j["recall"] = tp + fn ? json(static_cast<double>(tp) / static_cast<double>(tp + fn)) : json(nullptr);
  j["map"] = r.map ? json(*r.map) : json(nullptr);
  return j;
}

void write_annotation(const fs::path& out, const SceneSequence& seq, const Annotation& ann) {
  io::ensure_dir(out);
  for (std::size_t f = 0; f < seq.size(); ++f) {
    io::save_labels(ann.labels[f], out, seq.frames[f].frame_id);
    save_evidence(evidence_bits(resolve_conflicts(ann.evidence[f])), out, seq.frames[f].frame_id);
  }
}

int run_annotate(const AnnotateArgs& a) {
  a.cfg.validate();
  const fs::path dir = a.dir;
  SceneSequence seq = io::load_sequence(dir);
  if (!seq.fully_posed()) throw GeometryError("annotate: every frame needs a pose (run `smearlab align` first)");
  const auto gt = load_truth_if_present(dir, seq);
  const fs::path out = dir / a.out;

  if (a.sweep_m || a.sweep_window) {
    json table = json::array();
    const std::vector<int> values = a.sweep_m ? std::vector<int>{2, 4, 6, 8, 10} : std::vector<int>{1, 3, 5, 7};
    const char* name = a.sweep_m ? "m" : "window";
    std::printf("%-7s %10s %10s %10s %10s %10s %8s\n", name, "valid", "smeared", "unknown", "e_flags", "b_flags", "mAP");
    for (int value : values) {
      AnnotatorConfig cfg = a.cfg;
      (a.sweep_m ? cfg.m : cfg.window) = value;
      const Annotation ann = annotate_sequence(seq, cfg, a.jobs);
      const json truth = truth_summary(ann, gt);
      const auto& s = ann.stats;
      json row{{name, value},
               {"valid", s.valid},
               {"smeared", s.smeared},
               {"unknown", s.unknown},
               {"unknown_fraction", s.unknown_fraction()},
               {"flags", {{"v", s.raw_flags.v}, {"b", s.raw_flags.b}, {"e", s.raw_flags.e}}}};
      if (!truth.is_null()) row["truth"] = truth;
      std::printf("%-7d %10llu %10llu %10llu %10llu %10llu %8s\n", value, static_cast<unsigned long long>(s.valid),
                  static_cast<unsigned long long>(s.smeared), static_cast<unsigned long long>(s.unknown),
                  static_cast<unsigned long long>(s.raw_flags.e), static_cast<unsigned long long>(s.raw_flags.b),
                  truth.is_null() || truth["map"].is_null()
                      ? "-"
                      : std::to_string(truth["map"].get<double>()).substr(0, 6).c_str());
      table.push_back(std::move(row));
    }
    io::ensure_dir(out);
    io::write_json(out / (std::string("sweep_") + name + ".json"), table);
    return kExitOk;
  }

  Annotation ann = annotate_sequence(seq, a.cfg, a.jobs);
  json refine_report = nullptr;
  if (a.refine) {
    const json first = truth_summary(ann, gt);
    const IcpConfig icp = load_icp_config(a.icp_config);
    seq = refine_with_labels(seq, ann.labels, icp, nullptr, a.jobs);
    io::write_poses(out, seq, "poses");
    ann = annotate_sequence(seq, a.cfg, a.jobs);
    refine_report = {{"first_pass", first}};
    const json errors = pose_error_report(dir, seq);
    if (!errors.is_null()) refine_report["pose_error"] = errors;
  }
  write_annotation(out, seq, ann);

  json stats = stats_to_json(ann.stats, a.cfg);
  const json truth = truth_summary(ann, gt);
  if (!truth.is_null()) stats["truth"] = truth;
  if (!refine_report.is_null()) stats["refine"] = refine_report;
  io::write_json(out / "stats.json", stats);

  const auto& s = ann.stats;
  std::printf("annotated %zu frames: valid %llu, smeared %llu, unknown %llu (unknown fraction %.3f)\n", seq.size(),
              static_cast<unsigned long long>(s.valid), static_cast<unsigned long long>(s.smeared),
              static_cast<unsigned long long>(s.unknown), s.unknown_fraction());
  if (s.weights)
    std::printf("weights: w_b %.4f  w_e %.4f  w_v %.4f\n", s.weights->w_b, s.weights->w_e, s.weights->w_v);
  if (!truth.is_null() && !truth["precision"].is_null() && !truth["recall"].is_null())
    std::printf("vs gt: precision %.4f  recall %.4f\n", truth["precision"].get<double>(),
                truth["recall"].get<double>());
  return kExitOk;
}

// baseline -----------------------------------------------------------------------

struct BaselineArgs {
  std::string dir;
  std::string method = "median";
  std::string out;
  int kernel = 5;
  double tau_mm = 20.0;
  int neighbors = 20;
  double std_ratio = 2.0;
  unsigned jobs = 0;
};

int run_baseline(const BaselineArgs& a) {
  if (a.method != "median" && a.method != "statistical") throw ConfigError("unknown baseline method: " + a.method);
  if (a.method == "median" && (a.kernel < 1 || a.kernel % 2 == 0)) throw ConfigError("kernel size must be odd");
  if (a.neighbors < 1) throw ConfigError("neighbors must be >= 1");
  const fs::path dir = a.dir;
  const SceneSequence seq = io::load_sequence(dir);
  const fs::path out = a.out.empty() ? dir / "scores" / a.method : fs::path(a.out);
  io::ensure_dir(out);
  std::vector<Raster<std::uint16_t>> rasters(seq.size());
  parallel_for(seq.size(), a.jobs, [&](std::size_t f) {
    const FloatRaster s = a.method == "median" ? median_filter(seq.frames[f], a.kernel, a.tau_mm)
                                               : statistical_filter_frame(seq.frames[f], a.neighbors, a.std_ratio);
    rasters[f] = quantize_unit(s);
  });
  for (std::size_t f = 0; f < seq.size(); ++f)
    io::write_png16(out / (io::frame_stem(seq.frames[f].frame_id) + ".png"), rasters[f]);
  std::printf("wrote %zu %s score rasters to %s\n", seq.size(), a.method.c_str(), out.c_str());
  return kExitOk;
}

// evaluate -----------------------------------------------------------------------

/// 16-bit rasters are scores scaled by 65535; 8-bit rasters holding only
/// 0/1/2 are hard labels; other 8-bit rasters are scores scaled by 255.
FloatRaster load_prediction(const fs::path& path) {
  const io::GrayImage img = io::read_png(path);
  FloatRaster s(img.pixels.width(), img.pixels.height());
  if (img.bit_depth == 16) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(img.pixels[i] / 65535.0);
    return s;
  }
  bool labels = true;
  for (auto v : img.pixels) labels = labels && v <= 2;
  if (labels) {
    LabelMap l(img.pixels.width(), img.pixels.height());
    for (std::size_t i = 0; i < s.size(); ++i) l.label[i] = static_cast<std::uint8_t>(img.pixels[i]);
    return label_scores(l);
  }
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(img.pixels[i] / 255.0);
  return s;
}

int run_evaluate(const std::string& pred_dir, const std::string& gt_arg, const std::string& out_path) {
  if (!fs::is_directory(pred_dir)) throw ConfigError("prediction directory not found: " + pred_dir);
  fs::path gt_dir = gt_arg;
  if (fs::is_directory(gt_dir / "gt")) gt_dir /= "gt";
  if (!fs::is_directory(gt_dir)) throw ConfigError("ground-truth directory not found: " + gt_arg);
  const std::vector<int> ids = io::list_frame_ids(pred_dir, ".");
  if (ids.empty()) throw DataError("no prediction rasters in " + pred_dir);
  std::vector<FloatRaster> scores;
  std::vector<MaskRaster> truth;
  for (int id : ids) {
    const fs::path g = gt_dir / (io::frame_stem(id) + ".png");
    if (!fs::exists(g)) throw ConfigError("missing ground truth for frame " + std::to_string(id));
    scores.push_back(load_prediction(fs::path(pred_dir) / (io::frame_stem(id) + ".png")));
    MaskRaster t = io::read_png8(g);
    for (auto v : t)
      if (v > 2) throw DataError("ground truth label out of range in frame " + std::to_string(id));
    truth.push_back(std::move(t));
  }
  const MapResult r = mean_average_precision(scores, truth);
  for (std::size_t f : r.excluded)
    std::fprintf(stderr, "warning: frame %d has no smeared pixels, excluded from mAP\n", ids[f]);
  const json report = map_report(r, ids);
  if (!out_path.empty()) io::write_json(out_path, report);
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

// export -------------------------------------------------------------------------

int run_export(const std::string& dir_arg, const std::string& out_dir, int size, std::optional<double> alpha,
               std::optional<double> beta) {
  const fs::path dir = dir_arg;
  const SceneSequence seq = io::load_sequence(dir);
  const auto annotations = load_annotations(dir / "labels", seq);
  AnnotatorConfig cfg;
  if (fs::exists(dir / "labels" / "stats.json")) {
    const json stats = io::read_json(dir / "labels" / "stats.json");
    if (stats.contains("config")) {
      cfg.alpha = stats["config"].value("alpha", cfg.alpha);
      cfg.beta = stats["config"].value("beta", cfg.beta);
    }
  }
  if (alpha) cfg.alpha = *alpha;
  if (beta) cfg.beta = *beta;
  const json manifest = export_dataset(seq, annotations, load_truth_if_present(dir, seq), cfg, out_dir, size);
  std::printf("exported %zu frames to %s\n", seq.size(), out_dir.c_str());
  if (!manifest["weights"].is_null()) std::cout << "weights: " << manifest["weights"].dump() << "\n";
  return kExitOk;
}

// fuse ---------------------------------------------------------------------------

struct FuseArgs {
  std::string dir;
  std::string out;
  std::string filter = "none";
  bool binary = false;
  int frames = 0;
  int first = 0;
};

int run_fuse(const FuseArgs& a) {
  FuseConfig cfg;
  cfg.filter = parse_fuse_filter(a.filter);
  if (a.frames < 0 || a.first < 0) throw ConfigError("fuse: frame range must be non-negative");
  const fs::path dir = a.dir;
  SceneSequence seq = io::load_sequence(dir);
  if (!seq.fully_posed()) throw GeometryError("fuse: every frame needs a pose");
  const std::size_t first = std::min<std::size_t>(static_cast<std::size_t>(a.first), seq.size());
  const std::size_t last = a.frames > 0 ? std::min(seq.size(), first + static_cast<std::size_t>(a.frames)) : seq.size();
  if (first >= last) throw ConfigError("fuse: empty frame range");
  seq.frames = std::vector<DepthFrame>(seq.frames.begin() + static_cast<std::ptrdiff_t>(first),
                                       seq.frames.begin() + static_cast<std::ptrdiff_t>(last));

  std::vector<LabelMap> labels;
  if (cfg.filter == FuseFilter::Labels)
    for (auto& ann : load_annotations(dir / "labels", seq)) labels.push_back(std::move(ann.labels));
  const PointCloud cloud = fuse_frames(seq, cfg, labels);
  io::write_ply(a.out, cloud, a.binary ? io::PlyFormat::BinaryLittleEndian : io::PlyFormat::Ascii);

  json summary{{"points", cloud.size()}, {"frames", seq.size()}, {"filter", a.filter}};
  const auto gt = load_truth_if_present(dir, seq);
  bool complete = !gt.empty();
  for (const auto& g : gt) complete = complete && g.has_value();
  if (complete) {
    std::vector<MaskRaster> truth;
    for (const auto& g : gt) truth.push_back(*g);
    const auto c = count_by_truth(cloud, seq, truth);
    summary["gt_valid"] = c.valid;
    summary["gt_smeared"] = c.smeared;
  }
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-annotation of smeared depth pixels from multi-view sequences"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  std::uint64_t seed = 0;
  int frames = 0;
  auto* simulate = app.add_subcommand("simulate", "Render a synthetic dataset with injected smear");
  simulate->add_option("out-dir", sim_args.out_dir, "Output dataset directory")->required();
  simulate->add_option("--config", sim_args.config, "Scene config (JSON)");
  auto* seed_opt = simulate->add_option("--seed", seed, "Random seed");
  auto* frames_opt = simulate->add_option("--frames", frames, "Number of frames");
  simulate->add_flag("--random", sim_args.random, "Randomized scene layout and trajectory");
  simulate->add_flag("--no-poses", sim_args.no_poses, "Do not write poses/ (gt/poses is always written)");
  simulate->add_option("--jobs", sim_args.jobs, "Worker threads (0 = all cores)");

  AlignArgs align_args;
  auto* align = app.add_subcommand("align", "Estimate camera poses with ICP");
  align->add_option("dataset-dir", align_args.dir)->required()->check(CLI::ExistingDirectory);
  align->add_option("--icp-config", align_args.icp_config, "ICP config (JSON)");
  align->add_flag("--force", align_args.force, "Recompute poses that already exist");
  align->add_option("--jobs", align_args.jobs, "Worker threads (0 = all cores)");

  AnnotateArgs ann_args;
  auto* annotate = app.add_subcommand("annotate", "Label smeared/valid/unknown pixels");
  annotate->add_option("dataset-dir", ann_args.dir)->required()->check(CLI::ExistingDirectory);
  annotate->add_option("--epsilon", ann_args.cfg.epsilon_mm, "Agreement tolerance (mm)");
  annotate->add_option("--delta", ann_args.cfg.delta_mm, "See-through margin (mm)");
  annotate->add_option("--window", ann_args.cfg.window, "Empty-evidence window (odd)");
  annotate->add_option("--m", ann_args.cfg.m, "Reference frames (even)");
  annotate->add_option("--alpha", ann_args.cfg.alpha, "Loss alpha recorded for export");
  annotate->add_option("--beta", ann_args.cfg.beta, "Loss beta recorded for export");
  annotate->add_option("--out", ann_args.out, "Label directory, relative to the dataset");
  annotate->add_flag("--refine", ann_args.refine, "Re-align without smeared pixels, then annotate again");
  annotate->add_option("--icp-config", ann_args.icp_config, "ICP config for --refine");
  auto* sweep_m = annotate->add_flag("--sweep-m", ann_args.sweep_m, "Stats for m = 2,4,...,10");
  annotate->add_flag("--sweep-window", ann_args.sweep_window, "Stats for window = 1,3,5,7")->excludes(sweep_m);
  annotate->add_option("--jobs", ann_args.jobs, "Worker threads (0 = all cores)");

  BaselineArgs base_args;
  auto* baseline = app.add_subcommand("baseline", "Classical detectors as 16-bit score rasters");
  baseline->add_option("dataset-dir", base_args.dir)->required()->check(CLI::ExistingDirectory);
  baseline->add_option("--method", base_args.method, "median | statistical");
  baseline->add_option("--out", base_args.out, "Output directory (default scores/<method>)");
  baseline->add_option("--kernel", base_args.kernel, "Median kernel size");
  baseline->add_option("--tau", base_args.tau_mm, "Median residual threshold (mm)");
  baseline->add_option("--neighbors", base_args.neighbors, "Statistical filter neighbors");
  baseline->add_option("--std-ratio", base_args.std_ratio, "Statistical filter std ratio");
  baseline->add_option("--jobs", base_args.jobs, "Worker threads (0 = all cores)");

  std::string pred_dir, gt_dir, report_path;
  auto* evaluate = app.add_subcommand("evaluate", "mAP of predictions against ground truth");
  evaluate->add_option("pred-dir", pred_dir, "Labels or score rasters")->required();
  evaluate->add_option("gt-dir", gt_dir, "Ground-truth masks or a dataset with gt/")->required();
  evaluate->add_option("--out", report_path, "Write the JSON report here");

  std::string export_dir, export_out;
  int export_size = kExportSize;
  double alpha = 0.0, beta = 0.0;
  auto* exporter = app.add_subcommand("export", "Training samples for the classifier");
  exporter->add_option("dataset-dir", export_dir)->required()->check(CLI::ExistingDirectory);
  exporter->add_option("out-dir", export_out)->required();
  exporter->add_option("--size", export_size, "Output side length");
  auto* alpha_opt = exporter->add_option("--alpha", alpha, "Override loss alpha");
  auto* beta_opt = exporter->add_option("--beta", beta, "Override loss beta");

  FuseArgs fuse_args;
  auto* fuse = app.add_subcommand("fuse", "Merge frames into one world-frame point cloud");
  fuse->add_option("dataset-dir", fuse_args.dir)->required()->check(CLI::ExistingDirectory);
  fuse->add_option("out-ply", fuse_args.out)->required();
  fuse->add_option("--filter", fuse_args.filter, "none | median | labels");
  fuse->add_flag("--binary", fuse_args.binary, "Binary little-endian PLY");
  fuse->add_option("--frames", fuse_args.frames, "Number of frames to merge (0 = all)");
  fuse->add_option("--first", fuse_args.first, "Index of the first frame");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      if (seed_opt->count()) sim_args.seed = seed;
      if (frames_opt->count()) sim_args.frames = frames;
      return run_simulate(sim_args);
    }
    if (align->parsed()) return run_align(align_args);
    if (annotate->parsed()) return run_annotate(ann_args);
    if (baseline->parsed()) return run_baseline(base_args);
    if (evaluate->parsed()) return run_evaluate(pred_dir, gt_dir, report_path);
    if (exporter->parsed())
      return run_export(export_dir, export_out, export_size,
                        alpha_opt->count() ? std::optional<double>(alpha) : std::nullopt,
                        beta_opt->count() ? std::optional<double>(beta) : std::nullopt);
    if (fuse->parsed()) return run_fuse(fuse_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
