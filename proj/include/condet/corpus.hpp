#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "condet/types.hpp"

namespace condet {

/// Validated annotation set for the four-domain task sequence. Immutable
/// after construction and safe to share across concurrent readers.
class Corpus {
 public:
  Corpus() = default;

  /// Validates every invariant (id uniqueness, task/category references,
  /// positive box sizes) and normalizes ordering by id. Boxes that overflow
  /// their image are clamped and reported through warnings(); boxes that end
  /// up empty after clamping are rejected.
  static Corpus build(std::vector<Category> categories,
                      std::vector<TaskSpec> tasks,
                      std::vector<ImageRecord> images,
                      std::vector<GroundTruthBox> ground_truth);

  const std::vector<Category>& categories() const { return categories_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  const std::vector<ImageRecord>& images() const { return images_; }
  const std::vector<GroundTruthBox>& ground_truth() const { return ground_truth_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  int n_categories() const { return static_cast<int>(categories_.size()); }
  bool has_category(int id) const {
    return id >= 1 && id <= n_categories();
  }
  const ImageRecord* find_image(std::int64_t image_id) const;

  /// Indices into ground_truth() for one image, ordered by gt_id.
  std::span<const int> gts_of_image(std::int64_t image_id) const;

  /// Image ids of one task, ascending.
  std::vector<std::int64_t> task_images(int task_id) const;

 private:
  std::vector<Category> categories_;
  std::vector<TaskSpec> tasks_;
  std::vector<ImageRecord> images_;
  std::vector<GroundTruthBox> ground_truth_;
  std::vector<std::string> warnings_;
  std::unordered_map<std::int64_t, int> image_index_;
  std::unordered_map<std::int64_t, std::vector<int>> gt_index_;
};

/// Per-task image counts and the task x category instance-count matrix.
struct CorpusSummary {
  std::vector<int> task_ids;
  std::vector<std::int64_t> images_per_task;
  std::vector<std::vector<std::int64_t>> instances;  // [task][category]

  std::int64_t task_total(std::size_t task_row) const;
};

CorpusSummary summarize(const Corpus& corpus);

/// Annotation file I/O. The JSON schema is an object with arrays "images"
/// (id, width, height, task_id), "annotations" (id, image_id, category_id,
/// bbox [x, y, w, h]), and optional "categories" (id, name) and "tasks"
/// (id, period, scene, weather); missing tables fall back to the canonical
/// six categories and four tasks. Unknown fields are ignored.
Corpus parse_annotations_json(const nlohmann::json& j);
Corpus parse_annotations(const std::string& path);
nlohmann::ordered_json annotations_to_json(const Corpus& corpus);
void save_annotations(const Corpus& corpus, const std::string& path);

/// Detection file I/O: a JSON array of objects with image_id, category_id,
/// score, bbox [x, y, w, h], and optional logits (n_categories + 1 values).
/// Detections are validated against the corpus (image must exist, category
/// valid, score in [0, 1], score consistent with logits) and returned grouped
/// by image in corpus image order, preserving file order within an image.
std::vector<Detection> parse_detections_json(const nlohmann::json& j,
                                             const Corpus& corpus);
std::vector<Detection> parse_detections(const std::string& path,
                                        const Corpus& corpus);
nlohmann::ordered_json detections_to_json(const std::vector<Detection>& dets);
void save_detections(const std::vector<Detection>& dets, const std::string& path);

/// Reads a whole file; throws ValidationError naming the path when missing.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace condet
