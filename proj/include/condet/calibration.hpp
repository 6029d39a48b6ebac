#pragma once

#include <string>
#include <utility>
#include <vector>

#include "condet/corpus.hpp"
#include "condet/map_eval.hpp"
#include "condet/types.hpp"

namespace condet {

enum class CalibrationObjective { MeanAp, Nll };

CalibrationObjective parse_objective(const std::string& name);
std::string objective_name(CalibrationObjective objective);

struct CalibrationConfig {
  double temperature = 2.0;
  std::vector<double> grid = {1.0, 1.5, 2.0, 2.5, 3.0, 4.0};
  CalibrationObjective objective = CalibrationObjective::MeanAp;

  void validate() const;
};

/// Temperature-scales every detection: logits become logits / T and the score
/// becomes the softmax probability of the detection's category under the
/// scaled logits, so an emitted file stays score/logit-consistent. Boxes,
/// categories, and the per-detection argmax never change. Throws
/// ValidationError listing detections without logits.
std::vector<Detection> scale_scores(const std::vector<Detection>& detections,
                                    double temperature);

struct TemperatureSearch {
  double best_temperature = 1.0;
  CalibrationObjective objective = CalibrationObjective::MeanAp;
  std::vector<std::pair<double, double>> curve;  // (T, objective value)
};

/// Evaluates the objective at every grid temperature and returns the argmax
/// (mean_ap) or argmin (nll); ties break toward the smaller temperature.
/// The nll objective labels each detection with the class of the ground
/// truth it greedily overlaps at IoU >= 0.5 across categories, or background
/// when none qualifies, and averages -log p(label).
TemperatureSearch search_temperature(const Corpus& corpus,
                                     const std::vector<Detection>& detections,
                                     const CalibrationConfig& config,
                                     const EvalConfig& eval_config = {},
                                     int threads = 1);

}  // namespace condet
