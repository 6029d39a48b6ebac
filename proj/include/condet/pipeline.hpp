#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "condet/calibration.hpp"
#include "condet/continual.hpp"
#include "condet/map_eval.hpp"
#include "condet/synth.hpp"
#include "condet/tide.hpp"

namespace condet {

struct DistillInputs {
  std::string teacher_path;
  std::string student_path;
  DistillConfig config;
};

struct CalibrationStage {
  CalibrationConfig config;
  bool search = false;  // false = apply config.temperature directly
};

/// Everything one pipeline run needs. Relative paths are resolved against
/// the manifest file's directory. A fixed seed makes the whole run
/// deterministic; every module draws from its own named substream.
struct RunManifest {
  std::string annotations_path;
  std::map<int, std::string> detections_per_task;  // task id -> detection file
  std::string output_dir;
  std::uint64_t seed = 0;
  EvalConfig eval;
  TideConfig tide;
  ReplayConfig replay;
  std::optional<CalibrationStage> calibration;
  std::optional<DistillInputs> distill;
  std::optional<TrainConfig> train;
};

RunManifest parse_manifest_json(const nlohmann::json& j,
                                const std::string& base_dir);
RunManifest parse_manifest(const std::string& path);

struct PipelineResult {
  std::string output_dir;
  std::vector<std::string> files_written;
  EvalReport eval;
  TideReport tide;
};

/// Ingestion -> optional calibration -> evaluation -> error decomposition ->
/// replay policy (and optional distillation), then writes the report bundle:
/// eval_report.json, tide_report.json, replay.json, summary.md, plus
/// calibration_curve.json / recalibrated detections / distill.json when those
/// stages are configured. Nothing is written until every stage has finished,
/// so a failing run leaves no partial bundle. Output bytes are independent
/// of the thread count.
PipelineResult run_pipeline(const RunManifest& manifest, int threads = 1);

}  // namespace condet
