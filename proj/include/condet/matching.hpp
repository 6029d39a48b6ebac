#pragma once

#include <vector>

#include "condet/types.hpp"

namespace condet {

/// Intersection-over-union of two (x, y, w, h) boxes in double precision.
/// Boxes that merely touch along an edge intersect with area zero.
/// Throws ValidationError if either box has a non-positive dimension.
double iou(const Box& a, const Box& b);

/// Detection view handed to the matcher: `det_index` identifies the detection
/// in the caller's canonical order and breaks score ties (ascending).
struct DetCandidate {
  int det_index = 0;
  double score = 0.0;
  Box box;
};

struct GtCandidate {
  std::int64_t gt_id = 0;
  Box box;
};

struct MatchRecord {
  int det_index = 0;
  int rank = 0;                 // position in score-descending order
  std::int64_t gt_id = -1;      // -1 when unmatched
  double iou_value = 0.0;       // IoU with the matched ground truth

  bool matched() const { return gt_id >= 0; }
};

/// Greedy score-ordered assignment for one (image, category) group.
/// Detections are visited by descending score (ties by ascending det_index);
/// each takes the still-unmatched ground truth of highest IoU when that IoU
/// reaches `threshold` (IoU ties by ascending gt_id). Returns one record per
/// detection in rank order. The result is a partial injection: no ground
/// truth or detection appears in more than one match.
std::vector<MatchRecord> greedy_match(const std::vector<DetCandidate>& dets,
                                      const std::vector<GtCandidate>& gts,
                                      double threshold);

}  // namespace condet
