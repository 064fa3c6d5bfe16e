#pragma once

// Average precision with smeared pixels as the positive class and valid
// pixels as negatives; unknown ground truth is ignored.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "smear/core/types.hpp"

namespace smear {

/// AP = sum over distinct score thresholds (descending) of
/// (recall gained at the threshold) * (precision at the threshold).
/// Returns nullopt when no positive pixel is present.
inline std::optional<double> average_precision(const FloatRaster& scores, const MaskRaster& gt) {
  if (!scores.same_shape(gt)) throw DataError("average precision: score and ground-truth sizes differ");
  std::vector<std::pair<float, bool>> items;
  items.reserve(gt.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == static_cast<std::uint8_t>(Label::Unknown)) continue;
    const bool pos = gt[i] == static_cast<std::uint8_t>(Label::Smeared);
    positives += pos;
    items.emplace_back(scores[i], pos);
  }
  if (positives == 0) return std::nullopt;
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  double ap = 0.0;
  std::size_t tp = 0, seen = 0, tp_prev = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) {
      tp += items[j].second;
      ++j;
    }
    seen = j;
    ap += static_cast<double>(tp - tp_prev) / static_cast<double>(positives) * static_cast<double>(tp) /
          static_cast<double>(seen);
    tp_prev = tp;
    i = j;
  }
  return ap;
}

struct ConfusionCounts {
  std::uint64_t true_positive = 0;
  std::uint64_t false_positive = 0;
  std::uint64_t true_negative = 0;
  std::uint64_t false_negative = 0;
};

/// Pixels with score > threshold count as predicted smeared.
inline ConfusionCounts confusion(const FloatRaster& scores, const MaskRaster& gt, double threshold = 0.5) {
  if (!scores.same_shape(gt)) throw DataError("confusion: score and ground-truth sizes differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == 0) continue;
    const bool truth = gt[i] == 2, pred = scores[i] > threshold;
    if (truth && pred) ++c.true_positive;
    else if (!truth && pred) ++c.false_positive;
    else if (truth) ++c.false_negative;
    else ++c.true_negative;
  }
  return c;
}

struct MapResult {
  /// Unweighted mean of the defined per-frame APs (nullopt if none defined).
  std::optional<double> map;
  std::vector<std::optional<double>> ap;
  std::vector<ConfusionCounts> confusion;
  /// Frames without positive pixels, excluded from the mean.
  std::vector<std::size_t> excluded;
};

inline MapResult mean_average_precision(const std::vector<FloatRaster>& scores, const std::vector<MaskRaster>& gt) {
  if (scores.size() != gt.size()) throw DataError("mAP: score and ground-truth frame counts differ");
  MapResult r;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t f = 0; f < scores.size(); ++f) {
    for (float s : scores[f])
      if (!(s >= 0.0f && s <= 1.0f)) throw DataError("mAP: scores must lie in [0,1]");
    r.ap.push_back(average_precision(scores[f], gt[f]));
    r.confusion.push_back(confusion(scores[f], gt[f]));
    if (r.ap.back()) {
      sum += *r.ap.back();
      ++defined;
    } else {
      r.excluded.push_back(f);
    }
  }
  if (defined > 0) r.map = sum / static_cast<double>(defined);
  return r;
}

/// Scores for hard labels: smeared 1, valid 0, unknown 0.5.
inline FloatRaster label_scores(const LabelMap& labels) {
  FloatRaster s(labels.width(), labels.height(), 0.5f);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (labels.label[i] == static_cast<std::uint8_t>(Label::Smeared)) s[i] = 1.0f;
    else if (labels.label[i] == static_cast<std::uint8_t>(Label::Valid)) s[i] = 0.0f;
  }
  return s;
}

inline nlohmann::json map_report(const MapResult& r, const std::vector<int>& frame_ids) {
  using nlohmann::json;
  json frames = json::array();
  for (std::size_t f = 0; f < r.ap.size(); ++f) {
    const auto& c = r.confusion[f];
    frames.push_back({{"frame_id", f < frame_ids.size() ? frame_ids[f] : static_cast<int>(f)},
                      {"ap", r.ap[f] ? json(*r.ap[f]) : json(nullptr)},
                      {"confusion",
                       {{"threshold", 0.5},
                        {"tp", c.true_positive},
                        {"fp", c.false_positive},
                        {"tn", c.true_negative},
                        {"fn", c.false_negative}}}});
  }
  ConfusionCounts total;
  for (const auto& c : r.confusion) {
    total.true_positive += c.true_positive;
    total.false_positive += c.false_positive;
    total.true_negative += c.true_negative;
    total.false_negative += c.false_negative;
  }
  return {{"map", r.map ? json(*r.map) : json(nullptr)},
          {"frames", frames},
          {"excluded_frames", r.excluded.size()},
          {"confusion",
           {{"threshold", 0.5},
            {"tp", total.true_positive},
            {"fp", total.false_positive},
            {"tn", total.true_negative},
            {"fn", total.false_negative}}}};
}

}  // namespace smear
