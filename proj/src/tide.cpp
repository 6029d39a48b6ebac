#include "condet/tide.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <unordered_set>

#include "condet/error.hpp"
#include "condet/map_eval.hpp"
#include "condet/matching.hpp"
#include "condet/parallel.hpp"

namespace condet {

std::string error_type_name(ErrorType type) {
  switch (type) {
    case ErrorType::Classification: return "classification";
    case ErrorType::Localization: return "localization";
    case ErrorType::Both: return "both";
    case ErrorType::Duplicate: return "duplicate";
    case ErrorType::Background: return "background";
    case ErrorType::MissedGT: return "missed";
  }
  throw ComputeError("unknown error type");
}

void TideConfig::validate() const {
  if (!(0.0 < background_iou && background_iou < foreground_iou &&
        foreground_iou <= 1.0)) {
    throw ValidationError(
        "tide config requires 0 < background_iou < foreground_iou <= 1");
  }
  if (!(0.0 < base_iou_for_dap && base_iou_for_dap <= 1.0)) {
    throw ValidationError("tide config: base_iou_for_dap must lie in (0, 1]");
  }
}

namespace {

struct ImageErrors {
  std::vector<FalsePositive> false_positives;
  std::vector<std::int64_t> missed_gt_ids;
  std::vector<std::pair<int, char>> matched;  // (det index, matched flag)
};

ImageErrors analyze_image(const Corpus& corpus,
                          const std::vector<Detection>& detections,
                          const std::vector<int>& det_indices,
                          std::int64_t image_id, const TideConfig& config) {
  ImageErrors out;
  const auto gt_positions = corpus.gts_of_image(image_id);

  // Per-category greedy matching at the foreground threshold.
  std::unordered_set<std::int64_t> matched_gts;
  std::vector<char> det_is_matched(det_indices.size(), 0);
  for (int cat = 1; cat <= corpus.n_categories(); ++cat) {
    std::vector<DetCandidate> cands;
    for (int di : det_indices) {
      if (detections[static_cast<std::size_t>(di)].category_id == cat) {
        cands.push_back(DetCandidate{di, detections[static_cast<std::size_t>(di)].score,
                                     detections[static_cast<std::size_t>(di)].bbox});
      }
    }
    std::vector<GtCandidate> gts;
    for (int gi : gt_positions) {
      const GroundTruthBox& gt = corpus.ground_truth()[static_cast<std::size_t>(gi)];
      if (gt.category_id == cat) gts.push_back(GtCandidate{gt.gt_id, gt.bbox});
    }
    if (cands.empty()) continue;
    for (const MatchRecord& m : greedy_match(cands, gts, config.foreground_iou)) {
      if (!m.matched()) continue;
      matched_gts.insert(m.gt_id);
      const auto pos = std::find(det_indices.begin(), det_indices.end(), m.det_index);
      det_is_matched[static_cast<std::size_t>(pos - det_indices.begin())] = 1;
    }
  }

  for (std::size_t k = 0; k < det_indices.size(); ++k) {
    out.matched.emplace_back(det_indices[k], det_is_matched[k]);
    if (det_is_matched[k]) continue;

    const Detection& det = detections[static_cast<std::size_t>(det_indices[k])];
    double best_same = 0.0;
    double best_diff = 0.0;
    std::int64_t best_same_gt = -1;
    std::int64_t best_diff_gt = -1;
    int best_diff_cat = 0;
    for (int gi : gt_positions) {
      const GroundTruthBox& gt = corpus.ground_truth()[static_cast<std::size_t>(gi)];
      const double overlap = iou(det.bbox, gt.bbox);
      if (gt.category_id == det.category_id) {
        if (best_same_gt < 0 || overlap > best_same) {
          best_same = overlap;
          best_same_gt = gt.gt_id;
        }
      } else if (best_diff_gt < 0 || overlap > best_diff) {
        best_diff = overlap;
        best_diff_gt = gt.gt_id;
        best_diff_cat = gt.category_id;
      }
    }

    FalsePositive fp;
    fp.det_index = det_indices[k];
    fp.predicted_category = det.category_id;
    if (best_diff_gt >= 0 && best_diff >= config.foreground_iou) {
      fp.type = ErrorType::Classification;
      fp.target_gt_id = best_diff_gt;
      fp.true_category = best_diff_cat;
    } else if (best_same_gt >= 0 && best_same >= config.background_iou &&
               best_same < config.foreground_iou) {
      fp.type = ErrorType::Localization;
      fp.target_gt_id = best_same_gt;
    } else if (best_diff_gt >= 0 && best_diff >= config.background_iou &&
               best_diff < config.foreground_iou) {
      fp.type = ErrorType::Both;
    } else if (best_same_gt >= 0 && best_same >= config.foreground_iou) {
      fp.type = ErrorType::Duplicate;
    } else {
      fp.type = ErrorType::Background;
    }
    out.false_positives.push_back(fp);
  }

  for (int gi : gt_positions) {
    const GroundTruthBox& gt = corpus.ground_truth()[static_cast<std::size_t>(gi)];
    if (!matched_gts.count(gt.gt_id)) out.missed_gt_ids.push_back(gt.gt_id);
  }
  return out;
}

}  // namespace

ErrorAnalysis classify_errors(const Corpus& corpus,
                              const std::vector<Detection>& detections,
                              const TideConfig& config, int threads) {
  config.validate();

  std::unordered_map<std::int64_t, std::vector<int>> dets_per_image;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (corpus.find_image(detections[i].image_id) == nullptr) {
      throw ValidationError("detection references unknown image_id " +
                            std::to_string(detections[i].image_id));
    }
    dets_per_image[detections[i].image_id].push_back(static_cast<int>(i));
  }

  const std::vector<ImageRecord>& images = corpus.images();
  std::vector<ImageErrors> per_image(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    static const std::vector<int> kNone;
    auto it = dets_per_image.find(images[i].image_id);
    per_image[i] = analyze_image(corpus, detections,
                                 it == dets_per_image.end() ? kNone : it->second,
                                 images[i].image_id, config);
  });

  ErrorAnalysis analysis;
  analysis.det_matched.assign(detections.size(), 0);
  for (const ImageErrors& ie : per_image) {
    analysis.false_positives.insert(analysis.false_positives.end(),
                                    ie.false_positives.begin(),
                                    ie.false_positives.end());
    analysis.missed_gt_ids.insert(analysis.missed_gt_ids.end(),
                                  ie.missed_gt_ids.begin(), ie.missed_gt_ids.end());
    for (const auto& [det_index, matched] : ie.matched) {
      analysis.det_matched[static_cast<std::size_t>(det_index)] = matched;
    }
  }
  std::sort(analysis.false_positives.begin(), analysis.false_positives.end(),
            [](const FalsePositive& a, const FalsePositive& b) {
              return a.det_index < b.det_index;
            });
  std::sort(analysis.missed_gt_ids.begin(), analysis.missed_gt_ids.end());
  return analysis;
}

std::optional<double> single_threshold_map(const Corpus& corpus,
                                           const std::vector<Detection>& detections,
                                           double iou_threshold) {
  EvalConfig config;
  config.iou_thresholds = {iou_threshold};
  config.max_detections_per_image = std::numeric_limits<int>::max();
  return evaluate(corpus, detections, config).map;
}

namespace {

Corpus drop_ground_truth(const Corpus& corpus,
                         const std::vector<std::int64_t>& gt_ids) {
  const std::unordered_set<std::int64_t> drop(gt_ids.begin(), gt_ids.end());
  std::vector<GroundTruthBox> kept;
  for (const GroundTruthBox& gt : corpus.ground_truth()) {
    if (!drop.count(gt.gt_id)) kept.push_back(gt);
  }
  return Corpus::build(corpus.categories(), corpus.tasks(), corpus.images(),
                       std::move(kept));
}

const GroundTruthBox& gt_by_id(const Corpus& corpus, std::int64_t image_id,
                               std::int64_t gt_id) {
  for (int gi : corpus.gts_of_image(image_id)) {
    const GroundTruthBox& gt = corpus.ground_truth()[static_cast<std::size_t>(gi)];
    if (gt.gt_id == gt_id) return gt;
  }
  throw ComputeError("internal: fix target gt " + std::to_string(gt_id) +
                     " not found");
}

// Detections after repairing one error class (or all of them).
std::vector<Detection> repair_detections(const Corpus& corpus,
                                         const std::vector<Detection>& detections,
                                         const ErrorAnalysis& analysis,
                                         std::optional<ErrorType> only) {
  auto wants = [&](ErrorType t) { return !only || *only == t; };
  std::vector<char> drop(detections.size(), 0);
  std::vector<Detection> fixed = detections;
  for (const FalsePositive& fp : analysis.false_positives) {
    Detection& det = fixed[static_cast<std::size_t>(fp.det_index)];
    switch (fp.type) {
      case ErrorType::Classification:
        if (wants(fp.type)) det.category_id = fp.true_category;
        break;
      case ErrorType::Localization:
        if (wants(fp.type)) {
          det.bbox = gt_by_id(corpus, det.image_id, fp.target_gt_id).bbox;
        }
        break;
      case ErrorType::Both:
      case ErrorType::Duplicate:
      case ErrorType::Background:
        if (wants(fp.type)) drop[static_cast<std::size_t>(fp.det_index)] = 1;
        break;
      case ErrorType::MissedGT:
        break;
    }
  }
  std::vector<Detection> out;
  out.reserve(fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!drop[i]) out.push_back(std::move(fixed[i]));
  }
  return out;
}

double clamped_gain(std::optional<double> base, std::optional<double> fixed) {
  if (!base || !fixed) return 0.0;
  return std::max(0.0, *fixed - *base);
}

}  // namespace

double oracle_dap(const Corpus& corpus, const std::vector<Detection>& detections,
                  ErrorType type, const TideConfig& config) {
  config.validate();
  const ErrorAnalysis analysis = classify_errors(corpus, detections, config);
  const std::optional<double> base =
      single_threshold_map(corpus, detections, config.base_iou_for_dap);

  if (type == ErrorType::MissedGT) {
    const Corpus fixed_corpus = drop_ground_truth(corpus, analysis.missed_gt_ids);
    return clamped_gain(base, single_threshold_map(fixed_corpus, detections,
                                                   config.base_iou_for_dap));
  }
  const std::vector<Detection> fixed =
      repair_detections(corpus, detections, analysis, type);
  return clamped_gain(base,
                      single_threshold_map(corpus, fixed, config.base_iou_for_dap));
}

std::pair<double, double> special_errors(const Corpus& corpus,
                                         const std::vector<Detection>& detections,
                                         const TideConfig& config) {
  config.validate();
  const ErrorAnalysis analysis = classify_errors(corpus, detections, config);
  const std::optional<double> base =
      single_threshold_map(corpus, detections, config.base_iou_for_dap);

  std::vector<Detection> matched_only;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (analysis.det_matched[i]) matched_only.push_back(detections[i]);
  }
  const double dap_fp = clamped_gain(
      base, single_threshold_map(corpus, matched_only, config.base_iou_for_dap));

  const Corpus fn_corpus = drop_ground_truth(corpus, analysis.missed_gt_ids);
  const double dap_fn = clamped_gain(
      base, single_threshold_map(fn_corpus, detections, config.base_iou_for_dap));
  return {dap_fp, dap_fn};
}

std::pair<Corpus, std::vector<Detection>> apply_all_fixes(
    const Corpus& corpus, const std::vector<Detection>& detections,
    const TideConfig& config) {
  config.validate();
  const ErrorAnalysis analysis = classify_errors(corpus, detections, config);
  std::vector<Detection> fixed =
      repair_detections(corpus, detections, analysis, std::nullopt);

  // Repairing classes and boxes can leave residual duplicates (two repaired
  // detections claiming one ground truth); those are duplicate errors of the
  // repaired set, so the combined oracle suppresses them the same way.
  const ErrorAnalysis residual = classify_errors(corpus, fixed, config);
  std::vector<Detection> settled;
  settled.reserve(fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (residual.det_matched[i]) settled.push_back(std::move(fixed[i]));
  }
  Corpus fixed_corpus = drop_ground_truth(
      corpus, classify_errors(corpus, settled, config).missed_gt_ids);
  return {std::move(fixed_corpus), std::move(settled)};
}

std::vector<std::vector<std::int64_t>> confusion_matrix(const ErrorAnalysis& analysis,
                                                        int n_categories) {
  std::vector<std::vector<std::int64_t>> matrix(
      static_cast<std::size_t>(n_categories),
      std::vector<std::int64_t>(static_cast<std::size_t>(n_categories), 0));
  for (const FalsePositive& fp : analysis.false_positives) {
    if (fp.type != ErrorType::Classification) continue;
    matrix[static_cast<std::size_t>(fp.true_category - 1)]
          [static_cast<std::size_t>(fp.predicted_category - 1)]++;
  }
  return matrix;
}

TideReport tide_report(const Corpus& corpus, const std::vector<Detection>& detections,
                       const TideConfig& config, int threads) {
  config.validate();
  TideReport report;
  report.config = config;
  report.base_map = single_threshold_map(corpus, detections, config.base_iou_for_dap);

  const ErrorAnalysis analysis = classify_errors(corpus, detections, config, threads);
  for (const FalsePositive& fp : analysis.false_positives) {
    report.counts[static_cast<std::size_t>(fp.type)]++;
  }
  report.counts[static_cast<std::size_t>(ErrorType::MissedGT)] =
      static_cast<std::int64_t>(analysis.missed_gt_ids.size());

  for (int t = 0; t < kNumErrorTypes; ++t) {
    report.dap[static_cast<std::size_t>(t)] =
        oracle_dap(corpus, detections, static_cast<ErrorType>(t), config);
  }
  std::tie(report.dap_false_positive, report.dap_false_negative) =
      special_errors(corpus, detections, config);
  report.confusion = confusion_matrix(analysis, corpus.n_categories());
  return report;
}

}  // namespace condet
