#include "condet/pipeline.hpp"

#include <algorithm>
#include <filesystem>

#include "condet/error.hpp"
#include "condet/numeric.hpp"
#include "condet/report.hpp"

namespace condet {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / path).string();
}

EvalConfig parse_eval_config(const json& j) {
  EvalConfig config;
  if (auto it = j.find("iou_thresholds"); it != j.end()) {
    config.iou_thresholds = it->get<std::vector<double>>();
  }
  if (auto it = j.find("recall_points"); it != j.end()) {
    config.recall_points = it->get<int>();
  }
  if (auto it = j.find("max_detections_per_image"); it != j.end()) {
    config.max_detections_per_image = it->get<int>();
  }
  config.validate();
  return config;
}

TideConfig parse_tide_config(const json& j) {
  TideConfig config;
  if (auto it = j.find("foreground_iou"); it != j.end()) {
    config.foreground_iou = it->get<double>();
  }
  if (auto it = j.find("background_iou"); it != j.end()) {
    config.background_iou = it->get<double>();
  }
  if (auto it = j.find("base_iou_for_dap"); it != j.end()) {
    config.base_iou_for_dap = it->get<double>();
  }
  config.validate();
  return config;
}

ReplayConfig parse_replay_config(const json& j) {
  ReplayConfig config;
  if (auto it = j.find("capacity"); it != j.end()) config.capacity = it->get<int>();
  if (auto it = j.find("per_task_quota"); it != j.end()) {
    config.per_task_quota = it->get<int>();
  }
  if (auto it = j.find("rare_categories"); it != j.end()) {
    config.rare_categories.clear();
    for (const json& v : *it) config.rare_categories.insert(v.get<int>());
  }
  return config;
}

}  // namespace

RunManifest parse_manifest_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) {
    throw ParseError("manifest: top level must be a JSON object");
  }
  RunManifest manifest;
  if (!j.contains("annotations") || !j.at("annotations").is_string()) {
    throw ParseError("manifest: missing string field 'annotations'");
  }
  manifest.annotations_path = resolve(base_dir, j.at("annotations").get<std::string>());

  if (!j.contains("detections")) {
    throw ParseError("manifest: missing field 'detections'");
  }
  const json& dets = j.at("detections");
  if (dets.is_string()) {
    manifest.detections_per_task[0] = resolve(base_dir, dets.get<std::string>());
  } else if (dets.is_object()) {
    for (auto it = dets.begin(); it != dets.end(); ++it) {
      int task_id = 0;
      try {
        task_id = std::stoi(it.key());
      } catch (const std::exception&) {
        throw ParseError("manifest: detection keys must be task ids, got '" +
                         it.key() + "'");
      }
      if (!it.value().is_string()) {
        throw ParseError("manifest: detection paths must be strings");
      }
      manifest.detections_per_task[task_id] =
          resolve(base_dir, it.value().get<std::string>());
    }
  } else {
    throw ParseError("manifest: 'detections' must be a path or a task id -> path map");
  }

  if (auto it = j.find("output_dir"); it != j.end()) {
    manifest.output_dir = resolve(base_dir, it->get<std::string>());
  }
  if (auto it = j.find("seed"); it != j.end()) {
    manifest.seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("eval"); it != j.end()) {
    manifest.eval = parse_eval_config(*it);
  }
  if (auto it = j.find("tide"); it != j.end()) {
    manifest.tide = parse_tide_config(*it);
  }
  if (auto it = j.find("replay"); it != j.end()) {
    manifest.replay = parse_replay_config(*it);
  }
  if (auto it = j.find("calibration"); it != j.end()) {
    CalibrationStage stage;
    if (auto f = it->find("temperature"); f != it->end()) {
      stage.config.temperature = f->get<double>();
    }
    if (auto f = it->find("grid"); f != it->end()) {
      stage.config.grid = f->get<std::vector<double>>();
    }
    if (auto f = it->find("objective"); f != it->end()) {
      stage.config.objective = parse_objective(f->get<std::string>());
    }
    if (auto f = it->find("search"); f != it->end()) {
      stage.search = f->get<bool>();
    }
    stage.config.validate();
    manifest.calibration = stage;
  }
  if (auto it = j.find("distill"); it != j.end()) {
    DistillInputs inputs;
    if (!it->contains("teacher") || !it->contains("student")) {
      throw ParseError("manifest: distill needs 'teacher' and 'student' paths");
    }
    inputs.teacher_path = resolve(base_dir, it->at("teacher").get<std::string>());
    inputs.student_path = resolve(base_dir, it->at("student").get<std::string>());
    if (auto f = it->find("n_candidates"); f != it->end()) {
      inputs.config.n_candidates = f->get<int>();
    }
    if (auto f = it->find("n_sampled"); f != it->end()) {
      inputs.config.n_sampled = f->get<int>();
    }
    inputs.config.validate();
    manifest.distill = inputs;
  }
  if (auto it = j.find("train"); it != j.end()) {
    manifest.train = parse_train_config_json(*it);
  }
  return manifest;
}

RunManifest parse_manifest(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return parse_manifest_json(j, fs::path(path).parent_path().string());
}

PipelineResult run_pipeline(const RunManifest& manifest, int threads) {
  if (manifest.output_dir.empty()) {
    throw ValidationError("pipeline: output_dir must be set");
  }
  const Corpus corpus = parse_annotations(manifest.annotations_path);

  std::vector<Detection> detections;
  for (const auto& [task_id, path] : manifest.detections_per_task) {
    std::vector<Detection> part = parse_detections(path, corpus);
    detections.insert(detections.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
  }
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.image_id < b.image_id;
                   });

  // Calibration first: downstream metrics see the recalibrated scores.
  std::optional<TemperatureSearch> calibration;
  if (manifest.calibration) {
    CalibrationConfig config = manifest.calibration->config;
    if (!manifest.calibration->search) {
      config.grid = {config.temperature};
    }
    calibration = search_temperature(corpus, detections, config, manifest.eval, threads);
    detections = scale_scores(detections, calibration->best_temperature);
  }

  const EvalReport eval_report = evaluate(corpus, detections, manifest.eval, threads);
  const TideReport tide = tide_report(corpus, detections, manifest.tide, threads);
  const CorpusSummary summary = summarize(corpus);

  // Replay: one selection per task; tasks before the last feed the buffer in
  // task order, which is when their images become replayable.
  manifest.replay.validate(corpus.n_categories());
  std::map<int, std::vector<std::int64_t>> selections;
  for (const TaskSpec& task : corpus.tasks()) {
    selections[task.task_id] = select_replay(corpus, task.task_id, manifest.replay);
  }
  ReplayBuffer buffer(manifest.replay.capacity);
  for (const TaskSpec& task : corpus.tasks()) {
    if (task.task_id == static_cast<int>(corpus.tasks().size())) break;
    buffer.add(corpus, selections[task.task_id], task.task_id,
               manifest.replay.rare_categories);
  }

  std::optional<DistillSelection> distill_sel;
  double distill_loss = 0.0;
  if (manifest.distill) {
    const ProposalSet teacher = parse_proposals(manifest.distill->teacher_path);
    const ProposalSet student = parse_proposals(manifest.distill->student_path);
    DistillConfig config = manifest.distill->config;
    config.seed = manifest.seed;
    distill_sel = distill_select(teacher, config);
    distill_loss = distill_l2_loss(teacher, student, distill_sel->sampled,
                                   config.reduction);
  }

  // All computation is done; only now touch the filesystem.
  PipelineResult result;
  result.output_dir = manifest.output_dir;
  result.eval = eval_report;
  result.tide = tide;
  fs::create_directories(manifest.output_dir);
  auto emit = [&result](const std::string& name, const std::string& text) {
    const std::string path = (fs::path(result.output_dir) / name).string();
    write_text_file(path, text);
    result.files_written.push_back(name);
  };

  emit("eval_report.json", eval_report_to_json(eval_report).dump(2) + "\n");
  emit("tide_report.json",
       tide_report_to_json(tide, corpus.categories()).dump(2) + "\n");

  if (calibration) {
    ordered_json cal = calibration_to_json(*calibration);
    cal["mode"] = manifest.calibration->search ? "search" : "fixed";
    emit("calibration_curve.json", cal.dump(2) + "\n");
    emit("detections_calibrated.json", detections_to_json(detections).dump(2) + "\n");
  }

  ordered_json replay_json;
  replay_json["config"] = {{"capacity", manifest.replay.capacity},
                           {"per_task_quota", manifest.replay.per_task_quota},
                           {"rare_categories", manifest.replay.rare_categories}};
  replay_json["per_task"] = ordered_json::object();
  for (const auto& [task_id, ids] : selections) {
    replay_json["per_task"][std::to_string(task_id)] = ids;
  }
  replay_json["buffer"] = ordered_json::array();
  for (const ReplayEntry& e : buffer.entries()) {
    replay_json["buffer"].push_back({{"image_id", e.image_id},
                                     {"source_task", e.source_task},
                                     {"rare_count", e.rare_count}});
  }
  replay_json["buffer_size"] = buffer.size();
  emit("replay.json", replay_json.dump(2) + "\n");

  if (distill_sel) {
    ordered_json distill_json;
    distill_json["candidates"] = distill_sel->candidates;
    distill_json["sampled"] = distill_sel->sampled;
    distill_json["loss"] = distill_loss;
    emit("distill.json", distill_json.dump(2) + "\n");
  }

  std::ostringstream md;
  md << "# Run summary\n\n";
  md << "## Corpus\n\n" << format_summary_table(summary, corpus.categories()) << "\n";
  md << "## Evaluation\n\n" << format_eval_table(eval_report, "evaluated") << "\n";
  if (eval_report.map) {
    md << "Overall mAP: " << format_percent(*eval_report.map) << "\n\n";
  }
  md << "## Error decomposition\n\n"
     << format_tide_tables(tide, corpus.categories()) << "\n";
  if (calibration) {
    md << "## Calibration\n\nApplied temperature: "
       << calibration->best_temperature << " (objective "
       << objective_name(calibration->objective) << ")\n\n";
  }
  md << "## Replay buffer\n\n"
     << buffer.size() << " of " << manifest.replay.capacity << " slots used\n";
  if (manifest.train) {
    md << "\n## Training configuration\n\n```json\n"
       << train_config_to_json(*manifest.train).dump(2) << "\n```\n";
  }
  emit("summary.md", md.str());

  return result;
}

}  // namespace condet
