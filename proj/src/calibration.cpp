#include "condet/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "condet/error.hpp"
#include "condet/matching.hpp"
#include "condet/numeric.hpp"

namespace condet {

CalibrationObjective parse_objective(const std::string& name) {
  if (name == "mean_ap") return CalibrationObjective::MeanAp;
  if (name == "nll") return CalibrationObjective::Nll;
  throw ValidationError("unknown calibration objective '" + name +
                        "' (expected mean_ap or nll)");
}

std::string objective_name(CalibrationObjective objective) {
  return objective == CalibrationObjective::MeanAp ? "mean_ap" : "nll";
}

void CalibrationConfig::validate() const {
  if (temperature <= 0.0) {
    throw ValidationError("calibration config: temperature must be positive");
  }
  if (grid.empty()) {
    throw ValidationError("calibration config: grid must not be empty");
  }
  for (double t : grid) {
    if (t <= 0.0) {
      throw ValidationError("calibration config: grid temperatures must be positive");
    }
  }
}

std::vector<Detection> scale_scores(const std::vector<Detection>& detections,
                                    double temperature) {
  if (temperature <= 0.0) {
    throw ValidationError("temperature must be positive");
  }
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (!detections[i].logits) missing.push_back(i);
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "temperature scaling requires logits on every detection; missing on "
        << missing.size() << " detection(s) at indices";
    for (std::size_t k = 0; k < missing.size() && k < 10; ++k) {
      msg << ' ' << missing[k];
    }
    if (missing.size() > 10) msg << " ...";
    throw ValidationError(msg.str());
  }

  std::vector<Detection> scaled = detections;
  for (Detection& det : scaled) {
    std::vector<double>& logits = *det.logits;
    for (double& v : logits) v /= temperature;
    det.score = softmax(logits)[static_cast<std::size_t>(det.category_id - 1)];
  }
  return scaled;
}

namespace {

// Labels for the nll objective: geometry only, so they are shared by every
// grid temperature. background index = n_categories.
std::vector<int> nll_labels(const Corpus& corpus,
                            const std::vector<Detection>& detections) {
  std::vector<int> labels(detections.size(), corpus.n_categories());
  std::unordered_map<std::int64_t, std::vector<int>> per_image;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    per_image[detections[i].image_id].push_back(static_cast<int>(i));
  }
  for (const ImageRecord& img : corpus.images()) {
    auto it = per_image.find(img.image_id);
    if (it == per_image.end()) continue;
    std::vector<DetCandidate> cands;
    for (int di : it->second) {
      cands.push_back(DetCandidate{di, detections[static_cast<std::size_t>(di)].score,
                                   detections[static_cast<std::size_t>(di)].bbox});
    }
    std::vector<GtCandidate> gts;
    std::unordered_map<std::int64_t, int> gt_class;
    for (int gi : corpus.gts_of_image(img.image_id)) {
      const GroundTruthBox& gt = corpus.ground_truth()[static_cast<std::size_t>(gi)];
      gts.push_back(GtCandidate{gt.gt_id, gt.bbox});
      gt_class[gt.gt_id] = gt.category_id;
    }
    for (const MatchRecord& m : greedy_match(cands, gts, 0.5)) {
      if (m.matched()) {
        labels[static_cast<std::size_t>(m.det_index)] = gt_class[m.gt_id] - 1;
      }
    }
  }
  return labels;
}

}  // namespace

TemperatureSearch search_temperature(const Corpus& corpus,
                                     const std::vector<Detection>& detections,
                                     const CalibrationConfig& config,
                                     const EvalConfig& eval_config, int threads) {
  config.validate();
  if (detections.empty()) {
    throw ValidationError("temperature search requires at least one detection");
  }

  std::vector<int> labels;
  if (config.objective == CalibrationObjective::Nll) {
    labels = nll_labels(corpus, detections);
  }

  TemperatureSearch search;
  search.objective = config.objective;
  for (double t : config.grid) {
    const std::vector<Detection> scaled = scale_scores(detections, t);
    double value = 0.0;
    if (config.objective == CalibrationObjective::MeanAp) {
      const EvalReport report = evaluate(corpus, scaled, eval_config, threads);
      value = report.map.value_or(0.0);
    } else {
      double nll = 0.0;
      for (std::size_t i = 0; i < scaled.size(); ++i) {
        const std::vector<double> probs = softmax(*scaled[i].logits);
        nll -= std::log(std::max(probs[static_cast<std::size_t>(labels[i])],
                                 1e-300));
      }
      value = nll / static_cast<double>(scaled.size());
    }
    search.curve.emplace_back(t, value);
  }

  const bool maximize = config.objective == CalibrationObjective::MeanAp;
  std::size_t best = 0;
  for (std::size_t i = 1; i < search.curve.size(); ++i) {
    const double v = search.curve[i].second;
    const double b = search.curve[best].second;
    const bool better = maximize ? v > b : v < b;
    const bool tie_toward_smaller =
        v == b && search.curve[i].first < search.curve[best].first;
    if (better || tie_toward_smaller) best = i;
  }
  search.best_temperature = search.curve[best].first;
  return search;
}

}  // namespace condet
