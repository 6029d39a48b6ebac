#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace condet {

/// Axis-aligned box as (x, y, w, h) with top-left origin, pixel units.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double area() const { return w * h; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Category {
  int id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

struct TaskSpec {
  int task_id = 0;
  std::string period;  // "daytime" or "night"
  std::string scene;
  std::string weather;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct ImageRecord {
  std::int64_t image_id = 0;
  int width = 0;
  int height = 0;
  int task_id = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct GroundTruthBox {
  std::int64_t gt_id = 0;
  std::int64_t image_id = 0;
  int category_id = 0;
  Box bbox;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

/// One predicted box. `logits` is optional; when present it holds one entry
/// per category plus a trailing background entry, and the score must equal
/// softmax(logits) at the predicted category within kScoreLogitTolerance.
struct Detection {
  std::int64_t image_id = 0;
  int category_id = 0;
  double score = 0.0;
  Box bbox;
  std::optional<std::vector<double>> logits;

  friend bool operator==(const Detection&, const Detection&) = default;
};

inline constexpr double kScoreLogitTolerance = 1e-6;

/// The six-class table the toolkit defaults to when the annotation file does
/// not carry its own "categories" array.
const std::vector<Category>& canonical_categories();

/// The four-domain task sequence used as the default "tasks" table.
const std::vector<TaskSpec>& canonical_tasks();

inline constexpr int kDefaultImageWidth = 1920;
inline constexpr int kDefaultImageHeight = 1280;

}  // namespace condet
