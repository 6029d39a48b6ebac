#pragma once

#include <optional>
#include <vector>

#include "condet/corpus.hpp"
#include "condet/types.hpp"

namespace condet {

std::vector<double> default_iou_thresholds();  // 0.50, 0.55, ..., 0.95

struct EvalConfig {
  std::vector<double> iou_thresholds = default_iou_thresholds();
  int recall_points = 101;
  int max_detections_per_image = 100;

  void validate() const;  // throws ValidationError
};

/// One step of a cumulative precision/recall walk.
struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// Curve for one (category, IoU threshold) slice. A slice with no ground
/// truth has no defined AP; its detections still count as false positives
/// for error analysis.
struct PrCurve {
  std::vector<PrPoint> points;
  int n_gt = 0;

  bool defined() const { return n_gt > 0; }
};

/// Pooled match outcome for one detection, already in final rank order
/// (score descending, canonical detection index ascending).
struct RankedDet {
  double score = 0.0;
  bool tp = false;
};

/// Walks cumulative TP/FP counts over ranked detections. recall = TP / n_gt,
/// precision = TP / (TP + FP).
PrCurve pr_curve(const std::vector<RankedDet>& ranked, int n_gt);

/// Interpolated AP: the mean over recall_points evenly spaced recall values
/// in [0, 1] of the maximum precision at recall >= r (0 where unattained).
/// Undefined (nullopt) for a curve with no ground truth.
std::optional<double> average_precision(const PrCurve& curve, int recall_points);

struct CategoryEval {
  int category_id = 0;
  std::vector<std::optional<double>> ap_by_threshold;
  std::optional<double> ap;  // mean over thresholds
};

struct TaskEval {
  int task_id = 0;
  std::optional<double> map;
};

struct EvalReport {
  EvalConfig config;
  std::vector<CategoryEval> per_category;
  std::optional<double> map;
  std::vector<TaskEval> per_task;
  std::optional<double> task_average;  // mean of defined per-task mAPs
};

/// Full evaluation: greedy matching per (image, category) at every threshold,
/// keeping the top max_detections_per_image detections per image by score.
/// mAP is the mean over categories with ground truth of the per-category AP;
/// per-task values restrict both detections and ground truth to that task's
/// images. Deterministic for any thread count.
EvalReport evaluate(const Corpus& corpus, const std::vector<Detection>& detections,
                    const EvalConfig& config = {}, int threads = 1);

/// Arithmetic mean of defined per-task mAPs; unit-agnostic. Throws
/// ValidationError on an empty list.
double task_average(const std::vector<double>& per_task_maps);

}  // namespace condet
