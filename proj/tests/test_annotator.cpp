#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"

using namespace smear;
using smear::test::count_nonzero;
using smear::test::flat_frame;

namespace {

SceneSequence static_plane(int n, std::uint16_t depth) {
  SceneSequence s;
  for (int i = 0; i < n; ++i) s.frames.push_back(flat_frame(i, depth));
  return s;
}

const sim::SimulatedSequence& hole_sim() {
  static const sim::SimulatedSequence s = sim::render_scene(test::hole_scene(1, 8));
  return s;
}

const sim::SimulatedSequence& exact_sim() {
  static const sim::SimulatedSequence s = [] {
    auto scene = sim::default_scene(2, 8);
    scene.noise_sigma_mm = 0.0;
    return sim::render_scene(scene);
  }();
  return s;
}

bool subset(const MaskRaster& a, const MaskRaster& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

}  // namespace

TEST(ReferenceFrames, CenteredWindow) {
  EXPECT_EQ(reference_frames(10, 5, 4), (std::vector<std::size_t>{3, 4, 6, 7}));
  EXPECT_EQ(reference_frames(10, 5, 2), (std::vector<std::size_t>{4, 6}));
}

TEST(ReferenceFrames, TruncatedAtEnds) {
  EXPECT_EQ(reference_frames(10, 0, 4), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(reference_frames(10, 9, 4), (std::vector<std::size_t>{7, 8}));
  EXPECT_EQ(reference_frames(10, 1, 6), (std::vector<std::size_t>{0, 2, 3, 4}));
}

TEST(ReferenceFrames, BorrowsWhenTooFewRemain) {
  EXPECT_EQ(reference_frames(10, 0, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(reference_frames(10, 9, 2), (std::vector<std::size_t>{7, 8}));
  EXPECT_THROW(reference_frames(2, 0, 2), GeometryError);
}

TEST(Confidence, SpotValues) {
  EXPECT_EQ(confidence_from_angle(std::numbers::pi / 2.0), 1.0);
  EXPECT_EQ(confidence_from_angle(0.0), 0.0);
  EXPECT_NEAR(confidence_from_angle(std::numbers::pi / 6.0), 0.25, 1e-15);
  EXPECT_EQ(confidence_from_angle(2.0), 1.0);
}

TEST(RayAngle, PerpendicularAndCoincident) {
  const Eigen::Vector3d x(0.0, 0.0, 1000.0);
  EXPECT_NEAR(detail::ray_angle(x, {0.0, 0.0, 0.0}, {1000.0, 0.0, 1000.0}), std::numbers::pi / 2.0, 1e-12);
  EXPECT_EQ(detail::ray_angle(x, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}), 0.0);
  // Obtuse configurations are clamped.
  EXPECT_NEAR(detail::ray_angle(x, {0.0, 0.0, 0.0}, {0.0, 0.0, 2000.0}), std::numbers::pi / 2.0, 1e-12);
}

TEST(GatherEvidence, StaticPlaneIsValidEverywhere) {
  const SceneSequence s = static_plane(5, 1500);
  const EvidenceMap ev = gather_evidence(s, 2, AnnotatorConfig{});
  EXPECT_EQ(count_nonzero(ev.v), ev.v.size());
  EXPECT_EQ(count_nonzero(ev.b), 0u);
  EXPECT_EQ(count_nonzero(ev.e), 0u);
}

TEST(GatherEvidence, UnposedFrameFails) {
  SceneSequence s = static_plane(5, 1500);
  s.frames[3].pose.reset();
  EXPECT_THROW(gather_evidence(s, 2, AnnotatorConfig{}), GeometryError);
  EXPECT_THROW(annotate_sequence(s, AnnotatorConfig{}), GeometryError);
}

TEST(GatherEvidence, FloatingPixelOverHoleIsEmpty) {
  // References see nothing in a 9x9 hole; the target has one return inside it.
  SceneSequence s = static_plane(3, 1500);
  for (auto& f : s.frames)
    for (int v = 20; v < 29; ++v)
      for (int u = 28; u < 37; ++u) f.depth(u, v) = 0;
  s.frames[1].depth(32, 24) = 2000;
  AnnotatorConfig cfg;
  const EvidenceMap ev = gather_evidence(s, 1, cfg);
  EXPECT_EQ(ev.e(32, 24), 1);
  EXPECT_EQ(ev.v(32, 24), 0);
  EXPECT_EQ(ev.empty_clearance(32, 24), 5);
  for (int w : {1, 3, 5, 7, 9}) EXPECT_EQ(filter_empty_evidence(ev, w).e(32, 24), 1) << w;
  EXPECT_EQ(filter_empty_evidence(ev, 11).e(32, 24), 0);
  EXPECT_EQ(fuse_labels(ev).at(32, 24), Label::Smeared);
}

TEST(FilterEmpty, OneReturnInWindowClearsFlag) {
  SceneSequence s = static_plane(3, 1500);
  for (auto& f : s.frames)
    for (int v = 20; v < 29; ++v)
      for (int u = 28; u < 37; ++u) f.depth(u, v) = 0;
  s.frames[1].depth(32, 24) = 2000;
  // A reference return right next to the projected pixel.
  s.frames[0].depth(33, 24) = 1500;
  s.frames[2].depth(33, 24) = 1500;
  const EvidenceMap ev = gather_evidence(s, 1, AnnotatorConfig{});
  EXPECT_EQ(filter_empty_evidence(ev, 1).e(32, 24), 1);
  EXPECT_EQ(filter_empty_evidence(ev, 3).e(32, 24), 0);
}

TEST(FilterEmpty, WindowOneIsIdentity) {
  const auto& s = hole_sim();
  const EvidenceMap ev = gather_evidence(s.sequence, 3, AnnotatorConfig{});
  EXPECT_EQ(filter_empty_evidence(ev, 1), ev);
  EXPECT_THROW(filter_empty_evidence(ev, 4), ConfigError);
}

TEST(FilterEmpty, MonotoneInWindowOnSimulatorScene) {
  const auto& s = hole_sim();
  for (std::size_t f = 0; f < s.sequence.size(); ++f) {
    const EvidenceMap ev = gather_evidence(s.sequence, f, AnnotatorConfig{});
    MaskRaster prev = ev.e;
    for (int w : {3, 5, 7}) {
      const MaskRaster e = filter_empty_evidence(ev, w).e;
      EXPECT_TRUE(subset(e, prev)) << "frame " << f << " window " << w;
      prev = e;
    }
  }
}

TEST(GatherEvidence, SimulatedSmearOverHoleGetsEmptyFlag) {
  const auto& s = hole_sim();
  std::size_t on_smeared = 0, elsewhere = 0;
  for (std::size_t f = 0; f < s.sequence.size(); ++f) {
    const EvidenceMap ev = filter_empty_evidence(gather_evidence(s.sequence, f, AnnotatorConfig{}), 3);
    for (std::size_t i = 0; i < ev.e.size(); ++i) {
      if (!ev.e[i]) continue;
      (s.ground_truth[f][i] == 2 ? on_smeared : elsewhere)++;
    }
  }
  EXPECT_GT(on_smeared, 0u);
  EXPECT_EQ(elsewhere, 0u);
}

TEST(GatherEvidence, SimulatedSeeThroughBehind) {
  // Box at 1000 mm over a wall at 3000 mm, every edge pixel smeared to 2000 mm.
  sim::SyntheticScene scene;
  scene.camera = sim::default_camera();
  scene.primitives = {sim::Primitive::plane({0.0, 0.0, 3000.0}, {0.0, 0.0, -1.0}, 0.0, 0.0),
                      sim::Primitive::box({0.0, 0.0, 1100.0}, {200.0, 200.0, 100.0})};
  for (int i = 0; i < 3; ++i) scene.trajectory.push_back(sim::look_at({-80.0 + 80.0 * i, 0.0, 0.0}, {0.0, 0.0, 2000.0}));
  scene.smear.rate = 1.0;
  scene.smear.lambda_min = scene.smear.lambda_max = 0.5;
  const auto s = sim::render_scene(scene);
  std::size_t smeared = 0, behind = 0, false_behind = 0;
  const EvidenceMap ev = gather_evidence(s.sequence, 1, AnnotatorConfig{});
  for (std::size_t i = 0; i < ev.b.size(); ++i) {
    if (s.ground_truth[1][i] == 2) {
      ++smeared;
      EXPECT_GT(s.sequence.frames[1].depth[i], 1000);
      EXPECT_LT(s.sequence.frames[1].depth[i], 3000);
      behind += ev.b[i];
    } else {
      false_behind += ev.b[i];
    }
  }
  ASSERT_GT(smeared, 100u);
  EXPECT_GT(behind, smeared / 2);
  EXPECT_EQ(false_behind, 0u);
}

// Smeared edges in the references can leave a true edge point with only
// farther returns around its projection, so the rate is bounded, not zero.
TEST(GatherEvidence, FalseBehindIsRareUnderExactGeometry) {
  const auto& s = exact_sim();
  std::size_t valid = 0, behind = 0;
  for (std::size_t f = 0; f < s.sequence.size(); ++f) {
    const EvidenceMap ev = gather_evidence(s.sequence, f, AnnotatorConfig{});
    for (std::size_t i = 0; i < ev.b.size(); ++i) {
      if (s.ground_truth[f][i] != 1) continue;
      ++valid;
      behind += ev.b[i];
    }
  }
  EXPECT_LT(static_cast<double>(behind) / valid, 1e-3);
}

TEST(GatherEvidence, NoBehindWithoutSmear) {
  auto scene = sim::default_scene(2, 6);
  scene.noise_sigma_mm = 0.0;
  scene.smear.rate = 0.0;
  const auto s = sim::render_scene(scene);
  for (std::size_t f = 0; f < s.sequence.size(); ++f)
    EXPECT_EQ(count_nonzero(gather_evidence(s.sequence, f, AnnotatorConfig{}).b), 0u) << "frame " << f;
}

TEST(GatherEvidence, MonotoneInEpsilonAndDelta) {
  const auto& s = hole_sim();
  AnnotatorConfig a, b;
  b.epsilon_mm = 8.0;
  const EvidenceMap ea = gather_evidence(s.sequence, 4, a), eb = gather_evidence(s.sequence, 4, b);
  EXPECT_TRUE(subset(ea.v, eb.v));
  AnnotatorConfig c;
  c.delta_mm = 40.0;
  const EvidenceMap ec = gather_evidence(s.sequence, 4, c);
  EXPECT_TRUE(subset(ec.b, ea.b));
}

TEST(Confidence, OnlyOnValidAndInvariantUnderRigidMotion) {
  const auto& s = hole_sim();
  const AnnotatorConfig cfg;
  const EvidenceMap ev = confidence(s.sequence, 4, gather_evidence(s.sequence, 4, cfg), cfg);
  std::size_t positive = 0;
  for (std::size_t i = 0; i < ev.c.size(); ++i) {
    EXPECT_GE(ev.c[i], 0.0f);
    EXPECT_LE(ev.c[i], 1.0f);
    if (!ev.v[i]) EXPECT_EQ(ev.c[i], 0.0f);
    positive += ev.c[i] > 0.0f;
  }
  EXPECT_GT(positive, 0u);

  SceneSequence moved = s.sequence;
  std::mt19937_64 rng(12);
  const RigidPose t = test::random_pose(rng, 1.0, 1000.0);
  for (auto& f : moved.frames) f.pose = t * *f.pose;
  const EvidenceMap em = confidence(moved, 4, gather_evidence(moved, 4, cfg), cfg);
  double worst = 0.0;
  std::size_t flips = 0;
  for (std::size_t i = 0; i < ev.c.size(); ++i) {
    if (ev.v[i] != em.v[i]) {
      ++flips;
      continue;
    }
    worst = std::max(worst, std::abs(static_cast<double>(ev.c[i]) - em.c[i]));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LE(flips, ev.v.size() / 10000);
}

TEST(FuseLabels, TruthTable) {
  EvidenceMap ev(8, 1);
  for (int k = 0; k < 8; ++k) {
    ev.v(k, 0) = (k >> 0) & 1;
    ev.b(k, 0) = (k >> 1) & 1;
    ev.e(k, 0) = (k >> 2) & 1;
    ev.c(k, 0) = ev.v(k, 0) ? 0.5f : 0.0f;
  }
  const LabelMap l = fuse_labels(ev);
  const Label expected[8] = {Label::Unknown, Label::Valid,   Label::Smeared, Label::Unknown,
                             Label::Smeared, Label::Unknown, Label::Smeared, Label::Unknown};
  for (int k = 0; k < 8; ++k) {
    EXPECT_EQ(l.at(k, 0), expected[k]) << "v b e = " << (k & 1) << ((k >> 1) & 1) << ((k >> 2) & 1);
    const float conf = expected[k] == Label::Valid ? 0.5f : expected[k] == Label::Smeared ? 1.0f : 0.0f;
    EXPECT_EQ(l.confidence(k, 0), conf);
  }
  EXPECT_NO_THROW(l.validate());
}

TEST(ResolveConflicts, ClearsMixedPixelsOnly) {
  EvidenceMap ev(3, 1);
  ev.v(0, 0) = ev.b(0, 0) = 1;
  ev.v(1, 0) = 1;
  ev.c(1, 0) = 0.3f;
  ev.e(2, 0) = 1;
  const EvidenceMap r = resolve_conflicts(ev);
  EXPECT_EQ(r.v(0, 0) + r.b(0, 0) + r.e(0, 0), 0);
  EXPECT_EQ(r.v(1, 0), 1);
  EXPECT_EQ(r.e(2, 0), 1);
}

TEST(ClassWeights, EqualAndBoundaryCounts) {
  const WeightSet w = class_weights(EvidenceCounts{100, 100, 100});
  EXPECT_EQ(w.w_b, 2.0 / 3.0);
  EXPECT_EQ(w.w_e, 2.0 / 3.0);
  EXPECT_EQ(w.w_v, 2.0 / 3.0);
  const WeightSet z = class_weights(EvidenceCounts{300, 0, 0});
  EXPECT_EQ(z.w_v, 0.0);
  EXPECT_EQ(z.w_b, 1.0);
  EXPECT_EQ(z.w_e, 1.0);
  EXPECT_THROW(class_weights(EvidenceCounts{}), DataError);
}

TEST(ClassWeights, SumToTwoWhenAllPresent) {
  const WeightSet w = class_weights(EvidenceCounts{7, 19, 3});
  EXPECT_NEAR(w.w_b + w.w_e + w.w_v, 2.0, 1e-15);
}

TEST(ClassWeights, MatchBruteForceCountsOnRandomCorpus) {
  std::mt19937_64 rng(13);
  std::bernoulli_distribution flag(0.3);
  std::vector<EvidenceMap> corpus;
  std::uint64_t v = 0, b = 0, e = 0;
  for (int f = 0; f < 6; ++f) {
    EvidenceMap ev(17, 11);
    for (int y = 0; y < 11; ++y)
      for (int x = 0; x < 17; ++x) {
        ev.v(x, y) = flag(rng);
        ev.b(x, y) = flag(rng);
        ev.e(x, y) = flag(rng);
        v += ev.v(x, y);
        b += ev.b(x, y);
        e += ev.e(x, y);
      }
    corpus.push_back(ev);
  }
  const WeightSet w = class_weights(corpus);
  const double total = static_cast<double>(v + b + e);
  EXPECT_EQ(w.w_v, (b + e) / total);
  EXPECT_EQ(w.w_b, (v + e) / total);
  EXPECT_EQ(w.w_e, (v + b) / total);
}

TEST(AnnotateSequence, NoiseFreeStaticSceneHasNoSmear) {
  const Annotation a = annotate_sequence(static_plane(4, 1200), AnnotatorConfig{});
  EXPECT_EQ(a.stats.smeared, 0u);
  EXPECT_EQ(a.stats.unknown, 0u);
  EXPECT_EQ(a.stats.valid, a.stats.measured);
}

TEST(AnnotateSequence, DeterministicAndThreadIndependent) {
  const auto& s = hole_sim();
  const Annotation a = annotate_sequence(s.sequence, AnnotatorConfig{}, 1);
  const Annotation b = annotate_sequence(s.sequence, AnnotatorConfig{}, 3);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.evidence, b.evidence);
}

TEST(AnnotateSequence, WeightsMatchCountsOfResolvedEvidence) {
  const auto& s = hole_sim();
  const Annotation a = annotate_sequence(s.sequence, AnnotatorConfig{});
  std::uint64_t v = 0, b = 0, e = 0;
  for (const auto& ev : a.evidence)
    for (std::size_t i = 0; i < ev.v.size(); ++i) {
      const bool conflict = ev.v[i] && (ev.b[i] || ev.e[i]);
      if (conflict) continue;
      v += ev.v[i];
      b += ev.b[i];
      e += ev.e[i];
    }
  ASSERT_TRUE(a.stats.weights);
  const double total = static_cast<double>(v + b + e);
  EXPECT_EQ(a.stats.weights->w_v, (b + e) / total);
  EXPECT_EQ(a.stats.weights->w_b, (v + e) / total);
  EXPECT_EQ(a.stats.weights->w_e, (v + b) / total);
}

TEST(AnnotateSequence, ExactSceneWithoutSmearHasNoSmearedLabels) {
  auto scene = sim::default_scene(3, 8);
  scene.noise_sigma_mm = 0.0;
  scene.smear.rate = 0.0;
  const auto s = sim::render_scene(scene);
  const Annotation a = annotate_sequence(s.sequence, AnnotatorConfig{});
  EXPECT_EQ(a.stats.smeared, 0u);
  EXPECT_GT(a.stats.valid, 0u);
}

TEST(AnnotateSequence, PrecisionOnSmearedScene) {
  const auto s = sim::render_scene(sim::default_scene(1, 10));
  const Annotation a = annotate_sequence(s.sequence, AnnotatorConfig{});
  std::size_t tp = 0, fp = 0;
  for (std::size_t f = 0; f < s.sequence.size(); ++f) {
    const auto c = sim::evaluate_against_truth(a.labels[f], s.ground_truth[f]);
    tp += c.true_positive;
    fp += c.false_positive;
  }
  ASSERT_GT(tp, 0u);
  EXPECT_GE(static_cast<double>(tp) / (tp + fp), 0.95);
}
