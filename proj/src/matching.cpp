#include "condet/matching.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "condet/error.hpp"

namespace condet {

double iou(const Box& a, const Box& b) {
  if (a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0) {
    std::ostringstream msg;
    msg << "iou requires positive box dimensions, got (" << a.w << ", " << a.h
        << ") and (" << b.w << ", " << b.h << ")";
    throw ValidationError(msg.str());
  }
  const double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

std::vector<MatchRecord> greedy_match(const std::vector<DetCandidate>& dets,
                                      const std::vector<GtCandidate>& gts,
                                      double threshold) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&dets](int lhs, int rhs) {
    if (dets[lhs].score != dets[rhs].score) {
      return dets[lhs].score > dets[rhs].score;
    }
    return dets[lhs].det_index < dets[rhs].det_index;
  });

  std::vector<bool> gt_taken(gts.size(), false);
  std::vector<MatchRecord> records;
  records.reserve(dets.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const DetCandidate& det = dets[static_cast<std::size_t>(order[rank])];
    MatchRecord rec;
    rec.det_index = det.det_index;
    rec.rank = static_cast<int>(rank);
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_taken[g]) continue;
      const double overlap = iou(det.box, gts[g].box);
      if (overlap < threshold) continue;
      if (best < 0 || overlap > best_iou ||
          (overlap == best_iou &&
           gts[g].gt_id < gts[static_cast<std::size_t>(best)].gt_id)) {
        best = static_cast<int>(g);
        best_iou = overlap;
      }
    }
    if (best >= 0) {
      gt_taken[static_cast<std::size_t>(best)] = true;
      rec.gt_id = gts[static_cast<std::size_t>(best)].gt_id;
      rec.iou_value = best_iou;
    }
    records.push_back(rec);
  }
  return records;
}

}  // namespace condet
