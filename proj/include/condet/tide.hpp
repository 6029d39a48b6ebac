#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "condet/corpus.hpp"
#include "condet/types.hpp"

namespace condet {

enum class ErrorType {
  Classification = 0,
  Localization = 1,
  Both = 2,
  Duplicate = 3,
  Background = 4,
  MissedGT = 5,
};

inline constexpr int kNumErrorTypes = 6;
std::string error_type_name(ErrorType type);

struct TideConfig {
  double foreground_iou = 0.5;
  double background_iou = 0.1;
  double base_iou_for_dap = 0.5;

  void validate() const;  // requires 0 < background_iou < foreground_iou <= 1
};

/// One false positive with its assigned error type. For classification and
/// localization errors, target_gt_id names the ground truth the oracle fix
/// uses; true_category is that ground truth's class.
struct FalsePositive {
  int det_index = 0;
  ErrorType type = ErrorType::Background;
  std::int64_t target_gt_id = -1;
  int true_category = 0;
  int predicted_category = 0;
};

struct ErrorAnalysis {
  std::vector<FalsePositive> false_positives;  // canonical detection order
  std::vector<std::int64_t> missed_gt_ids;     // ascending gt_id
  std::vector<char> det_matched;               // per canonical detection
};

/// Assigns exactly one error type to every detection left unmatched by
/// greedy matching at foreground_iou, and one MissedGT per unmatched ground
/// truth. With s = best same-class IoU and d = best different-class IoU, the
/// first rule that fires wins:
///   classification  d >= foreground_iou
///   localization    background_iou <= s < foreground_iou
///   both            background_iou <= d < foreground_iou
///   duplicate       s >= foreground_iou (that ground truth is already taken
///                   by a higher-ranked detection)
///   background      all overlaps below background_iou
ErrorAnalysis classify_errors(const Corpus& corpus,
                              const std::vector<Detection>& detections,
                              const TideConfig& config = {}, int threads = 1);

/// Mean over categories with ground truth of AP at a single IoU threshold;
/// no per-image detection cap. Nullopt when no category has ground truth.
std::optional<double> single_threshold_map(const Corpus& corpus,
                                           const std::vector<Detection>& detections,
                                           double iou_threshold);

/// AP gained by an oracle that repairs all errors of one type, evaluated at
/// base_iou_for_dap: classification errors get the overlapped ground truth's
/// class, localization errors snap to their best same-class box, the other
/// detection errors are suppressed, and missed ground truth leaves the
/// denominator. Clamped at zero; zero when either split is undefined.
double oracle_dap(const Corpus& corpus, const std::vector<Detection>& detections,
                  ErrorType type, const TideConfig& config = {});

/// (false-positive dAP, false-negative dAP): AP gained by deleting every
/// unmatched detection, and by deleting every unmatched ground truth.
std::pair<double, double> special_errors(const Corpus& corpus,
                                         const std::vector<Detection>& detections,
                                         const TideConfig& config = {});

/// Applies every main-error fix at once, then suppresses detections that the
/// fixes turned into duplicates and drops ground truth that is still
/// unmatched. Whenever a true positive survives, the result evaluates to
/// mAP 1.0 at base_iou_for_dap.
std::pair<Corpus, std::vector<Detection>> apply_all_fixes(
    const Corpus& corpus, const std::vector<Detection>& detections,
    const TideConfig& config = {});

/// Cross-class confusion counts from classification errors: cell (i, j) is
/// the number of detections whose overlapped ground truth has class i + 1 but
/// that predicted class j + 1. The diagonal is zero by construction.
std::vector<std::vector<std::int64_t>> confusion_matrix(const ErrorAnalysis& analysis,
                                                        int n_categories);

struct TideReport {
  TideConfig config;
  std::optional<double> base_map;
  std::array<double, kNumErrorTypes> dap{};           // indexed by ErrorType
  std::array<std::int64_t, kNumErrorTypes> counts{};  // error instances per type
  double dap_false_positive = 0.0;
  double dap_false_negative = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;
};

TideReport tide_report(const Corpus& corpus, const std::vector<Detection>& detections,
                       const TideConfig& config = {}, int threads = 1);

}  // namespace condet
