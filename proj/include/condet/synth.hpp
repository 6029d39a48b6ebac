#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "condet/corpus.hpp"
#include "condet/types.hpp"

namespace condet {

/// Error mixture injected into generated detections. miss, misclassify,
/// mislocalize, both, and duplicate are per-ground-truth probabilities
/// (misclassify + mislocalize + both <= 1); background is the expected count
/// of spurious far-from-everything detections per image.
struct NoiseModel {
  double miss = 0.0;
  double misclassify = 0.0;
  double mislocalize = 0.0;
  double both = 0.0;
  double duplicate = 0.0;
  double background = 0.0;
};

struct SynthSpec {
  std::vector<std::int64_t> images_per_task = {4};  // canonical task prefix
  std::vector<double> category_rates;  // expected boxes per image per category;
                                       // empty = 0.5 for every category
  std::vector<Category> categories = canonical_categories();
  int image_width = kDefaultImageWidth;
  int image_height = kDefaultImageHeight;
  NoiseModel noise;
  bool with_logits = false;

  void validate() const;
  static SynthSpec standard();  // the corpus the pipeline examples use
};

SynthSpec parse_synth_spec_json(const nlohmann::json& j);
SynthSpec parse_synth_spec(const std::string& path);

struct SynthResult {
  Corpus corpus;
  std::vector<Detection> detections;
};

/// Deterministic generator: identical (seed, spec) pairs produce identical
/// corpora and detections. Ground truth is laid out on a non-overlapping
/// grid in the left part of each image and background noise lives in a
/// disjoint right margin, so each injected error lands in a known error
/// category: zero noise gives one IoU-1.0 correct detection per ground
/// truth, mislocalized boxes overlap only their own ground truth at an IoU
/// inside (0.1, 0.5), and background boxes overlap nothing.
SynthResult synth_generate(std::uint64_t seed, const SynthSpec& spec);

}  // namespace condet
