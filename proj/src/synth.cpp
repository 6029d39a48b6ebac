#include "condet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "condet/error.hpp"
#include "condet/rng.hpp"

namespace condet {

using nlohmann::json;

namespace {

constexpr double kBoxMin = 40.0;
constexpr double kBoxMax = 140.0;
constexpr double kCell = 320.0;         // 2 * kBoxMax + shift headroom
constexpr double kGtZoneFraction = 0.7;
constexpr double kBgZoneFraction = 0.75;

double check_probability(double p, const char* name) {
  if (p < 0.0 || p > 1.0) {
    throw ValidationError(std::string("synth spec: ") + name +
                          " must lie in [0, 1]");
  }
  return p;
}

}  // namespace

void SynthSpec::validate() const {
  if (images_per_task.empty() ||
      images_per_task.size() > canonical_tasks().size()) {
    throw ValidationError("synth spec: images_per_task must list 1 to " +
                          std::to_string(canonical_tasks().size()) + " tasks");
  }
  for (std::int64_t n : images_per_task) {
    if (n < 0) throw ValidationError("synth spec: image counts must be >= 0");
  }
  if (categories.empty()) {
    throw ValidationError("synth spec: categories must not be empty");
  }
  if (!category_rates.empty() && category_rates.size() != categories.size()) {
    throw ValidationError("synth spec: category_rates must have one entry per category");
  }
  for (double r : category_rates) {
    if (r < 0.0) throw ValidationError("synth spec: category rates must be >= 0");
  }
  check_probability(noise.miss, "noise.miss");
  check_probability(noise.duplicate, "noise.duplicate");
  const double kinds = check_probability(noise.misclassify, "noise.misclassify") +
                       check_probability(noise.mislocalize, "noise.mislocalize") +
                       check_probability(noise.both, "noise.both");
  if (kinds > 1.0) {
    throw ValidationError(
        "synth spec: misclassify + mislocalize + both must not exceed 1");
  }
  if (noise.background < 0.0) {
    throw ValidationError("synth spec: noise.background must be >= 0");
  }
  if ((noise.misclassify > 0.0 || noise.both > 0.0) && categories.size() < 2) {
    throw ValidationError(
        "synth spec: misclassification noise needs at least two categories");
  }
  if (image_width < 640 || image_height < static_cast<int>(kCell)) {
    throw ValidationError("synth spec: image must be at least 640 x " +
                          std::to_string(static_cast<int>(kCell)) +
                          " for the box layout");
  }
}

SynthSpec SynthSpec::standard() {
  SynthSpec spec;
  spec.images_per_task = {40, 30, 30, 20};
  spec.category_rates = {0.6, 0.5, 2.0, 0.6, 0.3, 0.1};
  spec.noise = NoiseModel{0.10, 0.08, 0.08, 0.04, 0.10, 0.30};
  spec.with_logits = true;
  return spec;
}

SynthSpec parse_synth_spec_json(const json& j) {
  if (!j.is_object()) {
    throw ParseError("synth spec: top level must be a JSON object");
  }
  SynthSpec spec;
  if (auto it = j.find("images_per_task"); it != j.end()) {
    if (!it->is_array()) throw ParseError("synth spec: images_per_task must be an array");
    spec.images_per_task.clear();
    for (const json& v : *it) {
      if (!v.is_number_integer()) {
        throw ParseError("synth spec: images_per_task must hold integers");
      }
      spec.images_per_task.push_back(v.get<std::int64_t>());
    }
  }
  if (auto it = j.find("categories"); it != j.end()) {
    if (!it->is_array()) throw ParseError("synth spec: categories must be an array");
    spec.categories.clear();
    for (const json& c : *it) {
      spec.categories.push_back(
          Category{c.at("id").get<int>(), c.at("name").get<std::string>()});
    }
  }
  if (auto it = j.find("category_rates"); it != j.end()) {
    if (!it->is_array()) throw ParseError("synth spec: category_rates must be an array");
    for (const json& v : *it) {
      if (!v.is_number()) throw ParseError("synth spec: category_rates must hold numbers");
      spec.category_rates.push_back(v.get<double>());
    }
  }
  if (auto it = j.find("image_width"); it != j.end()) spec.image_width = it->get<int>();
  if (auto it = j.find("image_height"); it != j.end()) spec.image_height = it->get<int>();
  if (auto it = j.find("with_logits"); it != j.end()) {
    if (!it->is_boolean()) throw ParseError("synth spec: with_logits must be a boolean");
    spec.with_logits = it->get<bool>();
  }
  if (auto it = j.find("noise"); it != j.end()) {
    if (!it->is_object()) throw ParseError("synth spec: noise must be an object");
    auto field = [&](const char* key, double fallback) {
      auto f = it->find(key);
      if (f == it->end()) return fallback;
      if (!f->is_number()) {
        throw ParseError(std::string("synth spec: noise.") + key + " must be a number");
      }
      return f->get<double>();
    };
    spec.noise.miss = field("miss", 0.0);
    spec.noise.misclassify = field("misclassify", 0.0);
    spec.noise.mislocalize = field("mislocalize", 0.0);
    spec.noise.both = field("both", 0.0);
    spec.noise.duplicate = field("duplicate", 0.0);
    spec.noise.background = field("background", 0.0);
  }
  spec.validate();
  return spec;
}

SynthSpec parse_synth_spec(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_synth_spec_json(j);
}

namespace {

// Logit vector whose softmax at the category equals the score exactly. The
// background logit varies per detection so that temperature scaling shifts
// cross-detection ranking instead of applying one global monotone map.
std::vector<double> consistent_logits(double score, int category_id,
                                      std::size_t n_categories,
                                      double background_logit) {
  std::vector<double> logits(n_categories + 1, 0.0);
  logits[n_categories] = background_logit;
  const double rest =
      static_cast<double>(n_categories - 1) + std::exp(background_logit);
  logits[static_cast<std::size_t>(category_id - 1)] =
      std::log(score * rest / (1.0 - score));
  return logits;
}

}  // namespace

SynthResult synth_generate(std::uint64_t seed, const SynthSpec& spec) {
  spec.validate();
  Rng rng = Rng(seed).substream("synth");

  const std::size_t n_cats = spec.categories.size();
  std::vector<double> rates = spec.category_rates;
  if (rates.empty()) rates.assign(n_cats, 0.5);

  const int cols = static_cast<int>(spec.image_width * kGtZoneFraction / kCell);
  const int rows = static_cast<int>(spec.image_height / kCell);
  const int slots = cols * rows;

  std::vector<TaskSpec> tasks(canonical_tasks().begin(),
                              canonical_tasks().begin() +
                                  static_cast<long>(spec.images_per_task.size()));
  std::vector<ImageRecord> images;
  std::vector<GroundTruthBox> gts;
  std::vector<Detection> dets;

  std::int64_t next_image_id = 1;
  std::int64_t next_gt_id = 1;
  for (std::size_t task_pos = 0; task_pos < spec.images_per_task.size(); ++task_pos) {
    for (std::int64_t n = 0; n < spec.images_per_task[task_pos]; ++n) {
      const std::int64_t image_id = next_image_id++;
      images.push_back(ImageRecord{image_id, spec.image_width, spec.image_height,
                                   static_cast<int>(task_pos) + 1});

      // Category draws fill grid slots row-major; overflow beyond the grid
      // is dropped so generated boxes never overlap each other.
      int used_slots = 0;
      for (std::size_t c = 0; c < n_cats && used_slots < slots; ++c) {
        int count = rng.poisson(rates[c]);
        for (; count > 0 && used_slots < slots; --count) {
          const int slot = used_slots++;
          const double w = rng.range(kBoxMin, kBoxMax);
          const double h = rng.range(kBoxMin, kBoxMax);
          const double x = (slot % cols) * kCell + rng.range(0.0, kCell / 8.0);
          const double y = (slot / cols) * kCell + rng.range(0.0, kCell / 8.0);
          const Box box{x, y, w, h};
          const int category_id = static_cast<int>(c) + 1;
          gts.push_back(GroundTruthBox{next_gt_id++, image_id, category_id, box});

          const bool missed = rng.chance(spec.noise.miss);
          if (!missed) {
            Detection det;
            det.image_id = image_id;
            det.category_id = category_id;
            det.bbox = box;
            det.score = rng.range(0.75, 0.95);
            const double kind = rng.real();
            if (kind < spec.noise.misclassify) {
              det.category_id = 1 + static_cast<int>(
                  (c + 1 + rng.below(n_cats - 1)) % n_cats);
              det.score = rng.range(0.55, 0.75);
            } else if (kind < spec.noise.misclassify + spec.noise.mislocalize) {
              const double target_iou = rng.range(0.15, 0.45);
              det.bbox.x += (1.0 - target_iou) / (1.0 + target_iou) * w;
              det.score = rng.range(0.55, 0.75);
            } else if (kind < spec.noise.misclassify + spec.noise.mislocalize +
                                  spec.noise.both) {
              det.category_id = 1 + static_cast<int>(
                  (c + 1 + rng.below(n_cats - 1)) % n_cats);
              const double target_iou = rng.range(0.15, 0.45);
              det.bbox.x += (1.0 - target_iou) / (1.0 + target_iou) * w;
              det.score = rng.range(0.55, 0.75);
            }
            if (spec.with_logits) {
              det.logits = consistent_logits(det.score, det.category_id, n_cats,
                                               rng.range(-2.0, 2.0));
            }
            dets.push_back(std::move(det));
          }
          if (rng.chance(spec.noise.duplicate)) {
            Detection dup;
            dup.image_id = image_id;
            dup.category_id = category_id;
            dup.bbox = box;
            dup.score = rng.range(0.35, 0.55);
            if (spec.with_logits) {
              dup.logits = consistent_logits(dup.score, dup.category_id, n_cats,
                                             rng.range(-2.0, 2.0));
            }
            dets.push_back(std::move(dup));
          }
        }
      }

      const int n_background = rng.poisson(spec.noise.background);
      for (int b = 0; b < n_background; ++b) {
        Detection det;
        det.image_id = image_id;
        det.category_id = 1 + static_cast<int>(rng.below(n_cats));
        const double w = rng.range(kBoxMin, 120.0);
        const double h = rng.range(kBoxMin, 120.0);
        const double zone_x = spec.image_width * kBgZoneFraction;
        det.bbox = Box{zone_x + rng.range(0.0, spec.image_width - zone_x - w - 1.0),
                       rng.range(0.0, spec.image_height - h - 1.0), w, h};
        det.score = rng.range(0.2, 0.5);
        if (spec.with_logits) {
          det.logits = consistent_logits(det.score, det.category_id, n_cats,
                                         rng.range(-2.0, 2.0));
        }
        dets.push_back(std::move(det));
      }
    }
  }

  SynthResult result;
  result.corpus = Corpus::build(spec.categories, std::move(tasks), std::move(images),
                                std::move(gts));
  result.detections = std::move(dets);
  return result;
}

}  // namespace condet
