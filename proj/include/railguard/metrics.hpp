#pragma once

// Detection evaluation: greedy IoU matching, precision/recall and
// F1-confidence curves, and all-point interpolated average precision.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "railguard/geometry.hpp"
#include "railguard/ingest.hpp"

namespace railguard {

struct LabeledBox {
  ClassLabel class_label = ClassLabel::person;
  BoundingBox bbox;
};

struct GroundTruthFrame {
  std::uint64_t frame_index = 0;
  std::vector<LabeledBox> boxes;
};

struct MatchedPair {
  std::size_t prediction = 0;  // index into the caller's prediction sequence
  std::size_t ground_truth = 0;
  double iou = 0.0;
  double confidence = 0.0;
};

/// One evaluated prediction: its confidence and whether it matched.
struct ScoredPrediction {
  double confidence = 0.0;
  bool true_positive = false;
};

struct MatchResult {
  std::uint64_t true_positives = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t false_negatives = 0;
  std::uint64_t ground_truth_count = 0;
  std::vector<MatchedPair> pairs;
  std::vector<ScoredPrediction> scored;
};

/// Total order used to visit predictions: confidence descending, then
/// x1, y1, x2, y2 ascending.
inline bool prediction_precedes(const Detection& a, const Detection& b) noexcept {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.bbox.x1 != b.bbox.x1) return a.bbox.x1 < b.bbox.x1;
  if (a.bbox.y1 != b.bbox.y1) return a.bbox.y1 < b.bbox.y1;
  if (a.bbox.x2 != b.bbox.x2) return a.bbox.x2 < b.bbox.x2;
  return a.bbox.y2 < b.bbox.y2;
}

/// Greedy matching for one class. Each prediction, in prediction_precedes
/// order, takes the unmatched same-class ground truth with the highest IoU
/// (lowest index on ties) if that IoU reaches iou_threshold.
/// Predictions below min_confidence are ignored entirely.
inline MatchResult match_detections(std::span<const Detection> preds,
                                    std::span<const LabeledBox> gt, double iou_threshold,
                                    ClassLabel class_filter, double min_confidence = 0.0) {
  MatchResult r;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].class_label == class_filter && preds[i].confidence >= min_confidence) {
      order.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return prediction_precedes(preds[a], preds[b]);
  });

  std::vector<std::size_t> gt_idx;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (gt[j].class_label == class_filter) gt_idx.push_back(j);
  }
  std::vector<bool> taken(gt.size(), false);
  r.ground_truth_count = gt_idx.size();

  for (std::size_t i : order) {
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j : gt_idx) {
      if (taken[j]) continue;
      const double v = iou(preds[i].bbox, gt[j].bbox);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    const bool hit = best >= 0.0 && best >= iou_threshold;
    if (hit) {
      taken[best_j] = true;
      ++r.true_positives;
      r.pairs.push_back({i, best_j, best, preds[i].confidence});
    } else {
      ++r.false_positives;
    }
    r.scored.push_back({preds[i].confidence, hit});
  }
  r.false_negatives = r.ground_truth_count - r.true_positives;
  return r;
}

/// Match results pooled across frames.
class EvaluationSet {
 public:
  void add(const MatchResult& m) {
    scored_.insert(scored_.end(), m.scored.begin(), m.scored.end());
    ground_truth_ += m.ground_truth_count;
    sorted_ = false;
  }

  void add(ScoredPrediction p) {
    scored_.push_back(p);
    sorted_ = false;
  }
  void add_ground_truth(std::uint64_t n) { ground_truth_ += n; }

  std::uint64_t ground_truth_count() const noexcept { return ground_truth_; }
  std::size_t prediction_count() const noexcept { return scored_.size(); }

  /// Predictions sorted by confidence descending.
  const std::vector<ScoredPrediction>& sorted() const {
    if (!sorted_) {
      std::stable_sort(scored_.begin(), scored_.end(),
                       [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
      tp_prefix_.assign(scored_.size() + 1, 0);
      for (std::size_t i = 0; i < scored_.size(); ++i) {
        tp_prefix_[i + 1] = tp_prefix_[i] + (scored_[i].true_positive ? 1 : 0);
      }
      sorted_ = true;
    }
    return scored_;
  }

  /// (TP, FP) among predictions with confidence >= t.
  std::pair<std::uint64_t, std::uint64_t> counts_at(double t) const {
    const auto& s = sorted();
    const auto it = std::partition_point(s.begin(), s.end(),
                                         [t](const ScoredPrediction& p) { return p.confidence >= t; });
    const auto n = static_cast<std::size_t>(it - s.begin());
    const std::uint64_t tp = tp_prefix_[n];
    return {tp, n - tp};
  }

 private:
  mutable std::vector<ScoredPrediction> scored_;
  mutable std::vector<std::uint64_t> tp_prefix_{0};
  mutable bool sorted_ = true;
  std::uint64_t ground_truth_ = 0;
};

struct CurvePoint {
  double threshold = 0.0;
  double precision = 1.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t true_positives = 0;
  std::uint64_t false_positives = 0;
  std::uint64_t false_negatives = 0;
};

inline double f1_score(double precision, double recall) noexcept {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

/// Precision with no predictions is 1 (vacuous); recall with no ground truth is 0.
inline CurvePoint make_curve_point(double threshold, std::uint64_t tp, std::uint64_t fp,
                                   std::uint64_t gt) {
  CurvePoint p;
  p.threshold = threshold;
  p.true_positives = tp;
  p.false_positives = fp;
  p.false_negatives = gt - tp;
  p.precision = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  p.recall = gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gt);
  p.f1 = f1_score(p.precision, p.recall);
  return p;
}

inline std::vector<CurvePoint> pr_curve(const EvaluationSet& set, std::span<const double> thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("threshold grid is empty");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("threshold grid must be sorted ascending");
  }
  std::vector<CurvePoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto [tp, fp] = set.counts_at(t);
    out.push_back(make_curve_point(t, tp, fp, set.ground_truth_count()));
  }
  return out;
}

/// 0.00, 0.01, ..., 1.00
inline std::vector<double> confidence_grid() {
  std::vector<double> g;
  g.reserve(101);
  for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
  return g;
}

inline std::vector<CurvePoint> f1_confidence_curve(const EvaluationSet& set) {
  const auto grid = confidence_grid();
  return pr_curve(set, grid);
}

/// One operating point per distinct confidence level, highest confidence first.
inline std::vector<CurvePoint> operating_points(const EvaluationSet& set) {
  const auto& s = set.sorted();
  std::vector<CurvePoint> pts;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    (s[i].true_positive ? tp : fp)++;
    if (i + 1 == s.size() || s[i + 1].confidence != s[i].confidence) {
      pts.push_back(make_curve_point(s[i].confidence, tp, fp, set.ground_truth_count()));
    }
  }
  return pts;
}

/// All-point interpolated AP: integral over recall of the precision envelope
/// p_env(r) = max precision among operating points with recall >= r.
/// Zero when there is no ground truth.
inline double average_precision(const EvaluationSet& set) {
  if (set.ground_truth_count() == 0) return 0.0;
  const auto pts = operating_points(set);
  std::vector<double> envelope(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_recall) * envelope[i];
    prev_recall = pts[i].recall;
  }
  return std::clamp(ap, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Dataset-level evaluation over frame streams.

struct EvaluationConfig {
  double iou_threshold = 0.5;
  ClassLabel class_filter = ClassLabel::person;
  double min_confidence = 0.0;
};

inline std::vector<LabeledBox> ground_truth_boxes(const FrameRecord& f) {
  std::vector<LabeledBox> out;
  out.reserve(f.detections.size());
  for (const auto& d : f.detections) out.push_back({d.class_label, d.bbox});
  return out;
}

/// Pairs frames by frame_index. Frames present on only one side contribute
/// unmatched predictions or unmatched ground truth.
inline EvaluationSet evaluate_frames(std::span<const FrameRecord> predictions,
                                     std::span<const GroundTruthFrame> ground_truth,
                                     const EvaluationConfig& cfg) {
  EvaluationSet set;
  std::map<std::uint64_t, const GroundTruthFrame*> gt_by_frame;
  for (const auto& g : ground_truth) gt_by_frame[g.frame_index] = &g;
  std::map<std::uint64_t, const FrameRecord*> pred_by_frame;
  for (const auto& p : predictions) pred_by_frame[p.frame_index] = &p;

  const std::vector<LabeledBox> none;
  std::set<std::uint64_t> frames;
  for (const auto& [k, _] : gt_by_frame) frames.insert(k);
  for (const auto& [k, _] : pred_by_frame) frames.insert(k);
  for (auto k : frames) {
    auto pit = pred_by_frame.find(k);
    auto git = gt_by_frame.find(k);
    std::span<const Detection> preds;
    if (pit != pred_by_frame.end()) preds = pit->second->detections;
    std::span<const LabeledBox> gts = git != gt_by_frame.end() ? std::span<const LabeledBox>(git->second->boxes)
                                                                : std::span<const LabeledBox>(none);
    set.add(match_detections(preds, gts, cfg.iou_threshold, cfg.class_filter, cfg.min_confidence));
  }
  return set;
}

inline nlohmann::ordered_json to_json(const CurvePoint& p) {
  nlohmann::ordered_json j;
  j["threshold"] = p.threshold;
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  j["tp"] = p.true_positives;
  j["fp"] = p.false_positives;
  j["fn"] = p.false_negatives;
  return j;
}

/// {ap, curve points, counts, config}
inline nlohmann::ordered_json metrics_document(const EvaluationSet& set, const EvaluationConfig& cfg) {
  nlohmann::ordered_json doc;
  const auto f1 = f1_confidence_curve(set);
  const auto pr = operating_points(set);
  const auto at_floor = make_curve_point(cfg.min_confidence, set.counts_at(cfg.min_confidence).first,
                                         set.counts_at(cfg.min_confidence).second,
                                         set.ground_truth_count());
  doc["ap"] = average_precision(set);
  doc["counts"] = {{"ground_truth", set.ground_truth_count()},
                   {"predictions", set.prediction_count()},
                   {"tp", at_floor.true_positives},
                   {"fp", at_floor.false_positives},
                   {"fn", at_floor.false_negatives},
                   {"precision", at_floor.precision},
                   {"recall", at_floor.recall},
                   {"f1", at_floor.f1}};
  auto best = std::max_element(f1.begin(), f1.end(),
                               [](const auto& a, const auto& b) { return a.f1 < b.f1; });
  doc["best_f1"] = {{"threshold", best->threshold}, {"f1", best->f1}};
  auto pr_json = nlohmann::ordered_json::array();
  for (const auto& p : pr) pr_json.push_back(to_json(p));
  auto f1_json = nlohmann::ordered_json::array();
  for (const auto& p : f1) f1_json.push_back(to_json(p));
  doc["pr_curve"] = std::move(pr_json);
  doc["f1_curve"] = std::move(f1_json);
  doc["config"] = {{"iou_threshold", cfg.iou_threshold},
                   {"class", std::string(to_string(cfg.class_filter))},
                   {"min_confidence", cfg.min_confidence},
                   {"matching", "greedy-confidence-desc"},
                   {"ap_method", "all-point"},
                   {"zero_prediction_precision", 1.0}};
  return doc;
}

/// Two-column CSV, e.g. "recall,precision".
inline std::string curve_csv(const std::vector<CurvePoint>& pts, bool pr) {
  std::string out = pr ? "recall,precision\n" : "threshold,f1\n";
  for (const auto& p : pts) {
    const double a = pr ? p.recall : p.threshold;
    const double b = pr ? p.precision : p.f1;
    out += nlohmann::json(a).dump() + "," + nlohmann::json(b).dump() + "\n";
  }
  return out;
}

}  // namespace railguard
