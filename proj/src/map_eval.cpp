#include "condet/map_eval.hpp"

#include <algorithm>
#include <numeric>

#include "condet/error.hpp"
#include "condet/matching.hpp"
#include "condet/parallel.hpp"

namespace condet {

std::vector<double> default_iou_thresholds() {
  std::vector<double> thresholds;
  for (int i = 0; i < 10; ++i) thresholds.push_back(0.5 + 0.05 * i);
  return thresholds;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) {
    throw ValidationError("eval config: iou_thresholds must not be empty");
  }
  double prev = 0.0;
  for (double t : iou_thresholds) {
    if (t <= prev || t > 1.0) {
      throw ValidationError(
          "eval config: iou_thresholds must be strictly increasing within (0, 1]");
    }
    prev = t;
  }
  if (recall_points < 2) {
    throw ValidationError("eval config: recall_points must be >= 2");
  }
  if (max_detections_per_image < 1) {
    throw ValidationError("eval config: max_detections_per_image must be >= 1");
  }
}

PrCurve pr_curve(const std::vector<RankedDet>& ranked, int n_gt) {
  PrCurve curve;
  curve.n_gt = n_gt;
  curve.points.reserve(ranked.size());
  int tp = 0;
  int fp = 0;
  for (const RankedDet& det : ranked) {
    det.tp ? ++tp : ++fp;
    PrPoint p;
    p.recall = n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0;
    p.precision = static_cast<double>(tp) / (tp + fp);
    curve.points.push_back(p);
  }
  return curve;
}

std::optional<double> average_precision(const PrCurve& curve, int recall_points) {
  if (!curve.defined()) return std::nullopt;
  if (curve.points.empty()) return 0.0;

  // Running max of precision from the tail: interp[i] is the best precision
  // at recall >= curve.points[i].recall.
  std::vector<double> interp(curve.points.size());
  double best = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    best = std::max(best, curve.points[i].precision);
    interp[i] = best;
  }

  double total = 0.0;
  for (int k = 0; k < recall_points; ++k) {
    const double r = static_cast<double>(k) / (recall_points - 1);
    // First curve point with recall >= r; recalls are non-decreasing.
    const auto it = std::lower_bound(
        curve.points.begin(), curve.points.end(), r,
        [](const PrPoint& p, double value) { return p.recall < value; });
    if (it != curve.points.end()) {
      total += interp[static_cast<std::size_t>(it - curve.points.begin())];
    }
  }
  return total / recall_points;
}

namespace {

// Match flags for the detections of one (image, category) group at every
// configured threshold, stored per image so pooling can run in any order.
struct GroupResult {
  int category_id = 0;
  std::vector<int> det_indices;              // canonical detection indices
  std::vector<std::vector<char>> tp_by_thr;  // [threshold][group position]
  int n_gt = 0;
};

struct ImageResult {
  std::vector<GroupResult> groups;  // ordered by category_id
};

struct PooledEntry {
  double score = 0.0;
  int det_index = 0;
  bool tp = false;
};

}  // namespace

EvalReport evaluate(const Corpus& corpus, const std::vector<Detection>& detections,
                    const EvalConfig& config, int threads) {
  config.validate();
  for (const Detection& det : detections) {
    if (corpus.find_image(det.image_id) == nullptr) {
      throw ValidationError("detection references unknown image_id " +
                            std::to_string(det.image_id));
    }
    if (!corpus.has_category(det.category_id)) {
      throw ValidationError("detection references unknown category_id " +
                            std::to_string(det.category_id));
    }
  }

  const int n_cats = corpus.n_categories();
  const std::size_t n_thr = config.iou_thresholds.size();
  const std::vector<ImageRecord>& images = corpus.images();

  // Detection indices per image, canonical order.
  std::unordered_map<std::int64_t, std::vector<int>> dets_per_image;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    dets_per_image[detections[i].image_id].push_back(static_cast<int>(i));
  }

  std::vector<ImageResult> results(images.size());
  parallel_for(images.size(), threads, [&](std::size_t img_pos) {
    const ImageRecord& img = images[img_pos];
    ImageResult& result = results[img_pos];

    std::vector<int> kept;
    if (auto it = dets_per_image.find(img.image_id); it != dets_per_image.end()) {
      kept = it->second;
      if (static_cast<int>(kept.size()) > config.max_detections_per_image) {
        std::sort(kept.begin(), kept.end(), [&](int a, int b) {
          if (detections[a].score != detections[b].score) {
            return detections[a].score > detections[b].score;
          }
          return a < b;
        });
        kept.resize(static_cast<std::size_t>(config.max_detections_per_image));
        std::sort(kept.begin(), kept.end());
      }
    }

    for (int cat = 1; cat <= n_cats; ++cat) {
      GroupResult group;
      group.category_id = cat;
      for (int di : kept) {
        if (detections[di].category_id == cat) group.det_indices.push_back(di);
      }
      std::vector<GtCandidate> gts;
      for (int gi : corpus.gts_of_image(img.image_id)) {
        const GroundTruthBox& gt = corpus.ground_truth()[static_cast<std::size_t>(gi)];
        if (gt.category_id == cat) gts.push_back(GtCandidate{gt.gt_id, gt.bbox});
      }
      group.n_gt = static_cast<int>(gts.size());
      if (group.det_indices.empty() && group.n_gt == 0) continue;

      std::vector<DetCandidate> cands;
      cands.reserve(group.det_indices.size());
      for (int di : group.det_indices) {
        cands.push_back(DetCandidate{di, detections[di].score, detections[di].bbox});
      }
      group.tp_by_thr.assign(n_thr, std::vector<char>(cands.size(), 0));
      for (std::size_t t = 0; t < n_thr; ++t) {
        const std::vector<MatchRecord> matches =
            greedy_match(cands, gts, config.iou_thresholds[t]);
        for (const MatchRecord& m : matches) {
          if (!m.matched()) continue;
          const auto pos = std::find(group.det_indices.begin(),
                                     group.det_indices.end(), m.det_index);
          group.tp_by_thr[t][static_cast<std::size_t>(
              pos - group.det_indices.begin())] = 1;
        }
      }
      result.groups.push_back(std::move(group));
    }
  });

  // Sequential pooling over a fixed image order keeps every reduction
  // independent of the worker count.
  auto slice_ap = [&](int cat, std::size_t thr_index,
                      const std::vector<char>& image_in_split)
      -> std::pair<std::optional<double>, int> {
    std::vector<PooledEntry> pooled;
    int n_gt = 0;
    for (std::size_t img_pos = 0; img_pos < images.size(); ++img_pos) {
      if (!image_in_split[img_pos]) continue;
      for (const GroupResult& group : results[img_pos].groups) {
        if (group.category_id != cat) continue;
        n_gt += group.n_gt;
        for (std::size_t k = 0; k < group.det_indices.size(); ++k) {
          pooled.push_back(PooledEntry{detections[group.det_indices[k]].score,
                                       group.det_indices[k],
                                       group.tp_by_thr[thr_index][k] != 0});
        }
      }
    }
    std::sort(pooled.begin(), pooled.end(), [](const PooledEntry& a, const PooledEntry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.det_index < b.det_index;
    });
    std::vector<RankedDet> ranked;
    ranked.reserve(pooled.size());
    for (const PooledEntry& e : pooled) ranked.push_back(RankedDet{e.score, e.tp});
    return {average_precision(pr_curve(ranked, n_gt), config.recall_points), n_gt};
  };

  auto split_map = [&](const std::vector<char>& image_in_split,
                       std::vector<CategoryEval>* per_category)
      -> std::optional<double> {
    double sum = 0.0;
    int defined = 0;
    for (int cat = 1; cat <= n_cats; ++cat) {
      CategoryEval ce;
      ce.category_id = cat;
      double cat_sum = 0.0;
      bool cat_defined = true;
      for (std::size_t t = 0; t < n_thr; ++t) {
        const auto [ap, n_gt] = slice_ap(cat, t, image_in_split);
        ce.ap_by_threshold.push_back(ap);
        if (ap) {
          cat_sum += *ap;
        } else {
          cat_defined = false;
        }
      }
      if (cat_defined) {
        ce.ap = cat_sum / static_cast<double>(n_thr);
        sum += *ce.ap;
        ++defined;
      }
      if (per_category) per_category->push_back(std::move(ce));
    }
    if (defined == 0) return std::nullopt;
    return sum / defined;
  };

  EvalReport report;
  report.config = config;

  std::vector<char> all_images(images.size(), 1);
  report.map = split_map(all_images, &report.per_category);

  std::vector<double> defined_task_maps;
  for (const TaskSpec& task : corpus.tasks()) {
    std::vector<char> in_task(images.size(), 0);
    for (std::size_t i = 0; i < images.size(); ++i) {
      in_task[i] = images[i].task_id == task.task_id ? 1 : 0;
    }
    TaskEval te;
    te.task_id = task.task_id;
    te.map = split_map(in_task, nullptr);
    if (te.map) defined_task_maps.push_back(*te.map);
    report.per_task.push_back(std::move(te));
  }
  if (!defined_task_maps.empty()) {
    report.task_average = task_average(defined_task_maps);
  }
  return report;
}

double task_average(const std::vector<double>& per_task_maps) {
  if (per_task_maps.empty()) {
    throw ValidationError("task_average requires at least one value");
  }
  const double sum =
      std::accumulate(per_task_maps.begin(), per_task_maps.end(), 0.0);
  return sum / static_cast<double>(per_task_maps.size());
}

}  // namespace condet
