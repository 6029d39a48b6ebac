#include "condet/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "condet/error.hpp"
#include "condet/numeric.hpp"

namespace condet {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string describe(const char* what, std::int64_t id) {
  std::ostringstream msg;
  msg << what << " " << id;
  return msg.str();
}

const json& require_field(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ParseError(ctx + ": missing field '" + key + "'");
  }
  return *it;
}

double as_number(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_number()) {
    throw ParseError(ctx + ": field '" + std::string(key) + "' must be a number");
  }
  return v.get<double>();
}

std::int64_t as_integer(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_number_integer()) {
    throw ParseError(ctx + ": field '" + std::string(key) + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

std::string as_string(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_string()) {
    throw ParseError(ctx + ": field '" + std::string(key) + "' must be a string");
  }
  return v.get<std::string>();
}

Box as_box(const json& j, const char* key, const std::string& ctx) {
  const json& v = require_field(j, key, ctx);
  if (!v.is_array() || v.size() != 4 ||
      !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); })) {
    throw ParseError(ctx + ": field '" + std::string(key) +
                     "' must be an array of 4 numbers [x, y, w, h]");
  }
  return Box{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(),
             v[3].get<double>()};
}

}  // namespace

Corpus Corpus::build(std::vector<Category> categories, std::vector<TaskSpec> tasks,
                     std::vector<ImageRecord> images,
                     std::vector<GroundTruthBox> ground_truth) {
  Corpus corpus;

  std::sort(categories.begin(), categories.end(),
            [](const Category& a, const Category& b) { return a.id < b.id; });
  if (categories.empty()) {
    throw ValidationError("category table must not be empty");
  }
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].id != static_cast<int>(i) + 1) {
      throw ValidationError("category ids must be unique and contiguous from 1; got id " +
                            std::to_string(categories[i].id) + " at position " +
                            std::to_string(i + 1));
    }
  }

  std::sort(tasks.begin(), tasks.end(),
            [](const TaskSpec& a, const TaskSpec& b) { return a.task_id < b.task_id; });
  if (tasks.empty()) {
    throw ValidationError("task table must not be empty");
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].task_id != static_cast<int>(i) + 1) {
      throw ValidationError("task ids must be unique and contiguous from 1; got id " +
                            std::to_string(tasks[i].task_id));
    }
  }

  std::sort(images.begin(), images.end(),
            [](const ImageRecord& a, const ImageRecord& b) {
              return a.image_id < b.image_id;
            });
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageRecord& img = images[i];
    if (i > 0 && images[i - 1].image_id == img.image_id) {
      throw ValidationError("duplicate image id " + std::to_string(img.image_id));
    }
    if (img.width <= 0 || img.height <= 0) {
      throw ValidationError(describe("image", img.image_id) +
                            ": width and height must be positive");
    }
    if (img.task_id < 1 || img.task_id > static_cast<int>(tasks.size())) {
      throw ValidationError(describe("image", img.image_id) + ": unknown task_id " +
                            std::to_string(img.task_id));
    }
    corpus.image_index_[img.image_id] = static_cast<int>(i);
  }

  std::sort(ground_truth.begin(), ground_truth.end(),
            [](const GroundTruthBox& a, const GroundTruthBox& b) {
              return a.gt_id < b.gt_id;
            });
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    GroundTruthBox& gt = ground_truth[i];
    if (i > 0 && ground_truth[i - 1].gt_id == gt.gt_id) {
      throw ValidationError("duplicate annotation id " + std::to_string(gt.gt_id));
    }
    auto img_it = corpus.image_index_.find(gt.image_id);
    if (img_it == corpus.image_index_.end()) {
      throw ValidationError(describe("annotation", gt.gt_id) + ": unknown image_id " +
                            std::to_string(gt.image_id));
    }
    if (gt.category_id < 1 || gt.category_id > static_cast<int>(categories.size())) {
      throw ValidationError(describe("annotation", gt.gt_id) + ": unknown category_id " +
                            std::to_string(gt.category_id));
    }
    if (gt.bbox.w <= 0.0 || gt.bbox.h <= 0.0) {
      throw ValidationError(describe("annotation", gt.gt_id) +
                            ": box width and height must be positive");
    }
    const ImageRecord& img = images[static_cast<std::size_t>(img_it->second)];
    const double x1 = std::max(0.0, gt.bbox.x);
    const double y1 = std::max(0.0, gt.bbox.y);
    const double x2 = std::min(static_cast<double>(img.width), gt.bbox.x2());
    const double y2 = std::min(static_cast<double>(img.height), gt.bbox.y2());
    if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) {
      throw ValidationError(describe("annotation", gt.gt_id) +
                            ": box lies entirely outside image " +
                            std::to_string(gt.image_id));
    }
    if (x1 != gt.bbox.x || y1 != gt.bbox.y || x2 != gt.bbox.x2() || y2 != gt.bbox.y2()) {
      corpus.warnings_.push_back(describe("annotation", gt.gt_id) +
                                 ": box clamped to image extent");
      gt.bbox = Box{x1, y1, x2 - x1, y2 - y1};
    }
    corpus.gt_index_[gt.image_id].push_back(static_cast<int>(i));
  }

  corpus.categories_ = std::move(categories);
  corpus.tasks_ = std::move(tasks);
  corpus.images_ = std::move(images);
  corpus.ground_truth_ = std::move(ground_truth);
  return corpus;
}

const ImageRecord* Corpus::find_image(std::int64_t image_id) const {
  auto it = image_index_.find(image_id);
  if (it == image_index_.end()) return nullptr;
  return &images_[static_cast<std::size_t>(it->second)];
}

std::span<const int> Corpus::gts_of_image(std::int64_t image_id) const {
  auto it = gt_index_.find(image_id);
  if (it == gt_index_.end()) return {};
  return it->second;
}

std::vector<std::int64_t> Corpus::task_images(int task_id) const {
  std::vector<std::int64_t> ids;
  for (const ImageRecord& img : images_) {
    if (img.task_id == task_id) ids.push_back(img.image_id);
  }
  return ids;
}

std::int64_t CorpusSummary::task_total(std::size_t task_row) const {
  std::int64_t total = 0;
  for (std::int64_t v : instances[task_row]) total += v;
  return total;
}

CorpusSummary summarize(const Corpus& corpus) {
  CorpusSummary summary;
  const std::size_t n_tasks = corpus.tasks().size();
  const std::size_t n_cats = corpus.categories().size();
  summary.task_ids.reserve(n_tasks);
  for (const TaskSpec& t : corpus.tasks()) summary.task_ids.push_back(t.task_id);
  summary.images_per_task.assign(n_tasks, 0);
  summary.instances.assign(n_tasks, std::vector<std::int64_t>(n_cats, 0));

  for (const ImageRecord& img : corpus.images()) {
    summary.images_per_task[static_cast<std::size_t>(img.task_id - 1)]++;
  }
  for (const GroundTruthBox& gt : corpus.ground_truth()) {
    const ImageRecord* img = corpus.find_image(gt.image_id);
    summary.instances[static_cast<std::size_t>(img->task_id - 1)]
                     [static_cast<std::size_t>(gt.category_id - 1)]++;
  }
  return summary;
}

Corpus parse_annotations_json(const json& j) {
  if (!j.is_object()) {
    throw ParseError("annotation file: top level must be a JSON object");
  }

  std::vector<Category> categories;
  if (auto it = j.find("categories"); it != j.end()) {
    if (!it->is_array()) throw ParseError("categories: must be an array");
    int pos = 0;
    for (const json& c : *it) {
      const std::string ctx = "categories[" + std::to_string(pos++) + "]";
      categories.push_back(Category{static_cast<int>(as_integer(c, "id", ctx)),
                                    as_string(c, "name", ctx)});
    }
  } else {
    categories = canonical_categories();
  }

  std::vector<TaskSpec> tasks;
  if (auto it = j.find("tasks"); it != j.end()) {
    if (!it->is_array()) throw ParseError("tasks: must be an array");
    int pos = 0;
    for (const json& t : *it) {
      const std::string ctx = "tasks[" + std::to_string(pos++) + "]";
      tasks.push_back(TaskSpec{static_cast<int>(as_integer(t, "id", ctx)),
                               as_string(t, "period", ctx), as_string(t, "scene", ctx),
                               as_string(t, "weather", ctx)});
    }
  } else {
    tasks = canonical_tasks();
  }

  std::vector<ImageRecord> images;
  if (auto it = j.find("images"); it != j.end()) {
    if (!it->is_array()) throw ParseError("images: must be an array");
    int pos = 0;
    for (const json& im : *it) {
      const std::string ctx = "images[" + std::to_string(pos++) + "]";
      images.push_back(ImageRecord{as_integer(im, "id", ctx),
                                   static_cast<int>(as_integer(im, "width", ctx)),
                                   static_cast<int>(as_integer(im, "height", ctx)),
                                   static_cast<int>(as_integer(im, "task_id", ctx))});
    }
  }

  std::vector<GroundTruthBox> gts;
  if (auto it = j.find("annotations"); it != j.end()) {
    if (!it->is_array()) throw ParseError("annotations: must be an array");
    int pos = 0;
    for (const json& a : *it) {
      const std::string ctx = "annotations[" + std::to_string(pos++) + "]";
      gts.push_back(GroundTruthBox{as_integer(a, "id", ctx),
                                   as_integer(a, "image_id", ctx),
                                   static_cast<int>(as_integer(a, "category_id", ctx)),
                                   as_box(a, "bbox", ctx)});
    }
  }

  return Corpus::build(std::move(categories), std::move(tasks), std::move(images),
                       std::move(gts));
}

Corpus parse_annotations(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_annotations_json(j);
}

ordered_json annotations_to_json(const Corpus& corpus) {
  ordered_json out;
  out["images"] = ordered_json::array();
  for (const ImageRecord& img : corpus.images()) {
    out["images"].push_back({{"id", img.image_id},
                             {"width", img.width},
                             {"height", img.height},
                             {"task_id", img.task_id}});
  }
  out["annotations"] = ordered_json::array();
  for (const GroundTruthBox& gt : corpus.ground_truth()) {
    out["annotations"].push_back(
        {{"id", gt.gt_id},
         {"image_id", gt.image_id},
         {"category_id", gt.category_id},
         {"bbox", {gt.bbox.x, gt.bbox.y, gt.bbox.w, gt.bbox.h}}});
  }
  out["categories"] = ordered_json::array();
  for (const Category& c : corpus.categories()) {
    out["categories"].push_back({{"id", c.id}, {"name", c.name}});
  }
  out["tasks"] = ordered_json::array();
  for (const TaskSpec& t : corpus.tasks()) {
    out["tasks"].push_back({{"id", t.task_id},
                            {"period", t.period},
                            {"scene", t.scene},
                            {"weather", t.weather}});
  }
  return out;
}

void save_annotations(const Corpus& corpus, const std::string& path) {
  write_text_file(path, annotations_to_json(corpus).dump(2) + "\n");
}

std::vector<Detection> parse_detections_json(const json& j, const Corpus& corpus) {
  if (!j.is_array()) {
    throw ParseError("detection file: top level must be a JSON array");
  }
  std::vector<Detection> dets;
  dets.reserve(j.size());
  int pos = 0;
  for (const json& d : j) {
    const std::string ctx = "detections[" + std::to_string(pos++) + "]";
    Detection det;
    det.image_id = as_integer(d, "image_id", ctx);
    det.category_id = static_cast<int>(as_integer(d, "category_id", ctx));
    det.score = as_number(d, "score", ctx);
    det.bbox = as_box(d, "bbox", ctx);
    if (auto it = d.find("logits"); it != d.end() && !it->is_null()) {
      if (!it->is_array()) throw ParseError(ctx + ": logits must be an array");
      std::vector<double> logits;
      for (const json& v : *it) {
        if (!v.is_number()) throw ParseError(ctx + ": logits must be numbers");
        logits.push_back(v.get<double>());
      }
      det.logits = std::move(logits);
    }

    if (corpus.find_image(det.image_id) == nullptr) {
      throw ValidationError(ctx + ": unknown image_id " + std::to_string(det.image_id));
    }
    if (!corpus.has_category(det.category_id)) {
      throw ValidationError(ctx + ": unknown category_id " +
                            std::to_string(det.category_id));
    }
    if (det.score < 0.0 || det.score > 1.0) {
      throw ValidationError(ctx + ": score must lie in [0, 1], got " +
                            std::to_string(det.score));
    }
    if (det.bbox.w <= 0.0 || det.bbox.h <= 0.0) {
      throw ValidationError(ctx + ": box width and height must be positive");
    }
    if (det.logits) {
      const std::size_t expected = corpus.categories().size() + 1;
      if (det.logits->size() != expected) {
        throw ValidationError(ctx + ": logits must have " + std::to_string(expected) +
                              " entries (categories + background), got " +
                              std::to_string(det.logits->size()));
      }
      const std::vector<double> probs = softmax(*det.logits);
      const double expected_score =
          probs[static_cast<std::size_t>(det.category_id - 1)];
      if (std::abs(expected_score - det.score) > kScoreLogitTolerance) {
        std::ostringstream msg;
        msg << ctx << ": score " << det.score
            << " is inconsistent with softmax(logits) = " << expected_score
            << " for category " << det.category_id;
        throw ValidationError(msg.str());
      }
    }
    dets.push_back(std::move(det));
  }

  // Group by image in corpus image order; file order is kept within an image.
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.image_id < b.image_id;
                   });
  return dets;
}

std::vector<Detection> parse_detections(const std::string& path, const Corpus& corpus) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_detections_json(j, corpus);
}

ordered_json detections_to_json(const std::vector<Detection>& dets) {
  ordered_json out = ordered_json::array();
  for (const Detection& d : dets) {
    ordered_json item = {{"image_id", d.image_id},
                         {"category_id", d.category_id},
                         {"score", d.score},
                         {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}}};
    if (d.logits) item["logits"] = *d.logits;
    out.push_back(std::move(item));
  }
  return out;
}

void save_detections(const std::vector<Detection>& dets, const std::string& path) {
  write_text_file(path, detections_to_json(dets).dump(2) + "\n");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ValidationError("cannot write file: " + path);
  }
  out << text;
  if (!out) {
    throw ValidationError("write failed: " + path);
  }
}

}  // namespace condet
