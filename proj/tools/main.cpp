#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "condet/calibration.hpp"
#include "condet/continual.hpp"
#include "condet/corpus.hpp"
#include "condet/error.hpp"
#include "condet/map_eval.hpp"
#include "condet/numeric.hpp"
#include "condet/pipeline.hpp"
#include "condet/report.hpp"
#include "condet/synth.hpp"
#include "condet/tide.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware default
  std::string output_dir;
  std::string format = "both";

  bool want_json() const { return format == "json" || format == "both"; }
  bool want_markdown() const { return format == "markdown" || format == "both"; }
};

void print_warnings(const condet::Corpus& corpus) {
  for (const std::string& w : corpus.warnings()) {
    std::cerr << "warning: " << w << "\n";
  }
}

void write_output(const GlobalOptions& opts, const std::string& name,
                  const std::string& text) {
  if (opts.output_dir.empty()) return;
  fs::create_directories(opts.output_dir);
  condet::write_text_file((fs::path(opts.output_dir) / name).string(), text);
}

// Restricts a corpus and its detections to one task's images.
std::pair<condet::Corpus, std::vector<condet::Detection>> filter_task(
    const condet::Corpus& corpus, const std::vector<condet::Detection>& dets,
    int task_id) {
  std::vector<condet::ImageRecord> images;
  for (const condet::ImageRecord& img : corpus.images()) {
    if (img.task_id == task_id) images.push_back(img);
  }
  std::vector<condet::GroundTruthBox> gts;
  for (const condet::GroundTruthBox& gt : corpus.ground_truth()) {
    if (corpus.find_image(gt.image_id)->task_id == task_id) gts.push_back(gt);
  }
  condet::Corpus filtered = condet::Corpus::build(corpus.categories(), corpus.tasks(),
                                                  std::move(images), std::move(gts));
  std::vector<condet::Detection> kept;
  for (const condet::Detection& det : dets) {
    if (filtered.find_image(det.image_id) != nullptr) kept.push_back(det);
  }
  return {std::move(filtered), std::move(kept)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual detection evaluation toolkit"};
  app.require_subcommand(1);

  GlobalOptions opts;
  app.add_option("--seed", opts.seed, "Run seed; every module derives its own substream");
  app.add_option("--threads", opts.threads, "Worker threads (0 = hardware)");
  app.add_option("--output-dir", opts.output_dir, "Directory for report files");
  app.add_option("--format", opts.format, "Report format")
      ->check(CLI::IsMember({"json", "markdown", "both"}));

  // validate
  std::string ann_path, det_path;
  CLI::App* validate = app.add_subcommand("validate", "Check annotation and detection files");
  validate->add_option("--annotations", ann_path, "Annotation JSON file")->required();
  validate->add_option("--detections", det_path, "Detection JSON file");

  // synth
  std::string synth_spec_path;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--spec", synth_spec_path, "Synth spec JSON (defaults to the standard corpus)");

  // eval
  std::string eval_ann, eval_det;
  int eval_task = 0;
  std::vector<double> eval_thresholds;
  int eval_recall_points = 101;
  int eval_max_dets = 100;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Compute per-task and average mAP");
  eval_cmd->add_option("--annotations", eval_ann)->required();
  eval_cmd->add_option("--detections", eval_det)->required();
  eval_cmd->add_option("--task", eval_task, "Restrict to one task");
  eval_cmd->add_option("--iou-thresholds", eval_thresholds, "Override IoU thresholds");
  eval_cmd->add_option("--recall-points", eval_recall_points);
  eval_cmd->add_option("--max-dets", eval_max_dets, "Max detections per image");

  // tide
  std::string tide_ann, tide_det;
  int tide_task = 0;
  condet::TideConfig tide_config;
  std::vector<double> tide_eval_thresholds;
  CLI::App* tide_cmd = app.add_subcommand("tide", "Decompose detection errors");
  tide_cmd->add_option("--annotations", tide_ann)->required();
  tide_cmd->add_option("--detections", tide_det)->required();
  tide_cmd->add_option("--task", tide_task, "Restrict to one task");
  tide_cmd->add_option("--foreground-iou", tide_config.foreground_iou);
  tide_cmd->add_option("--background-iou", tide_config.background_iou);
  tide_cmd->add_option("--base-iou", tide_config.base_iou_for_dap);

  // calibrate
  std::string cal_ann, cal_det, cal_objective = "mean_ap";
  double cal_temperature = 2.0;
  bool cal_search = false;
  std::vector<double> cal_grid;
  CLI::App* calibrate = app.add_subcommand("calibrate", "Temperature-scale detection scores");
  calibrate->add_option("--annotations", cal_ann)->required();
  calibrate->add_option("--detections", cal_det)->required();
  calibrate->add_option("--temperature", cal_temperature, "Fixed temperature");
  calibrate->add_flag("--search", cal_search, "Grid-search the temperature");
  calibrate->add_option("--grid", cal_grid, "Search grid");
  calibrate->add_option("--objective", cal_objective)
      ->check(CLI::IsMember({"mean_ap", "nll"}));

  // replay-select
  std::string replay_ann;
  int replay_task = 0;
  condet::ReplayConfig replay_config;
  std::vector<int> replay_rare;
  CLI::App* replay = app.add_subcommand("replay-select", "Pick replay images for one task");
  replay->add_option("--annotations", replay_ann)->required();
  replay->add_option("--task", replay_task)->required();
  replay->add_option("--quota", replay_config.per_task_quota);
  replay->add_option("--capacity", replay_config.capacity);
  replay->add_option("--rare-categories", replay_rare, "Rare category ids");

  // distill-loss
  std::string teacher_path, student_path, reduction = "mean";
  condet::DistillConfig distill_config;
  CLI::App* distill = app.add_subcommand("distill-loss", "Select boxes and compute the distillation loss");
  distill->add_option("--teacher", teacher_path)->required();
  distill->add_option("--student", student_path)->required();
  distill->add_option("--n-candidates", distill_config.n_candidates);
  distill->add_option("--n-sampled", distill_config.n_sampled);
  distill->add_option("--reduction", reduction)->check(CLI::IsMember({"mean", "sum"}));

  // config-check
  std::string train_path;
  CLI::App* config_check = app.add_subcommand("config-check", "Validate a training config");
  config_check->add_option("--config", train_path)->required();

  // pipeline
  std::string manifest_path;
  CLI::App* pipeline_cmd = app.add_subcommand("pipeline", "Run the full report pipeline");
  pipeline_cmd->add_option("--manifest", manifest_path)->required();

  // Global flags may appear after the subcommand name.
  for (CLI::App* sub : {validate, synth, eval_cmd, tide_cmd, calibrate, replay,
                        distill, config_check, pipeline_cmd}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (*validate) {
      const condet::Corpus corpus = condet::parse_annotations(ann_path);
      print_warnings(corpus);
      std::size_t n_dets = 0;
      if (!det_path.empty()) {
        n_dets = condet::parse_detections(det_path, corpus).size();
      }
      const condet::CorpusSummary summary = condet::summarize(corpus);
      if (opts.want_json()) {
        ordered_json out = condet::summary_to_json(summary, corpus.categories());
        if (!det_path.empty()) out["detections"] = n_dets;
        std::cout << out.dump(2) << "\n";
      }
      if (opts.want_markdown()) {
        std::cout << condet::format_summary_table(summary, corpus.categories());
      }
      return 0;
    }

    if (*synth) {
      if (opts.output_dir.empty()) {
        throw condet::ValidationError("synth requires --output-dir");
      }
      const condet::SynthSpec spec = synth_spec_path.empty()
                                         ? condet::SynthSpec::standard()
                                         : condet::parse_synth_spec(synth_spec_path);
      const condet::SynthResult result = condet::synth_generate(opts.seed, spec);
      fs::create_directories(opts.output_dir);
      condet::save_annotations(result.corpus,
                               (fs::path(opts.output_dir) / "annotations.json").string());
      condet::save_detections(result.detections,
                              (fs::path(opts.output_dir) / "detections.json").string());
      std::cout << "wrote " << result.corpus.images().size() << " images, "
                << result.corpus.ground_truth().size() << " boxes, "
                << result.detections.size() << " detections to " << opts.output_dir
                << "\n";
      return 0;
    }

    if (*eval_cmd) {
      condet::Corpus corpus = condet::parse_annotations(eval_ann);
      print_warnings(corpus);
      std::vector<condet::Detection> dets = condet::parse_detections(eval_det, corpus);
      if (eval_task > 0) {
        std::tie(corpus, dets) = filter_task(corpus, dets, eval_task);
      }
      condet::EvalConfig config;
      if (!eval_thresholds.empty()) config.iou_thresholds = eval_thresholds;
      config.recall_points = eval_recall_points;
      config.max_detections_per_image = eval_max_dets;
      const condet::EvalReport report =
          condet::evaluate(corpus, dets, config, opts.threads);
      const std::string md = condet::format_eval_table(report, "evaluated");
      const std::string js = condet::eval_report_to_json(report).dump(2) + "\n";
      if (opts.want_json()) std::cout << js;
      if (opts.want_markdown()) std::cout << md;
      write_output(opts, "eval_report.json", js);
      write_output(opts, "eval_table.md", md);
      return 0;
    }

    if (*tide_cmd) {
      condet::Corpus corpus = condet::parse_annotations(tide_ann);
      print_warnings(corpus);
      std::vector<condet::Detection> dets = condet::parse_detections(tide_det, corpus);
      if (tide_task > 0) {
        std::tie(corpus, dets) = filter_task(corpus, dets, tide_task);
      }
      const condet::TideReport report =
          condet::tide_report(corpus, dets, tide_config, opts.threads);
      const std::string md = condet::format_tide_tables(report, corpus.categories());
      const std::string js =
          condet::tide_report_to_json(report, corpus.categories()).dump(2) + "\n";
      if (opts.want_json()) std::cout << js;
      if (opts.want_markdown()) std::cout << md;
      write_output(opts, "tide_report.json", js);
      write_output(opts, "tide_tables.md", md);
      return 0;
    }

    if (*calibrate) {
      const condet::Corpus corpus = condet::parse_annotations(cal_ann);
      print_warnings(corpus);
      const std::vector<condet::Detection> dets =
          condet::parse_detections(cal_det, corpus);
      condet::CalibrationConfig config;
      config.temperature = cal_temperature;
      config.objective = condet::parse_objective(cal_objective);
      if (!cal_grid.empty()) config.grid = cal_grid;
      if (!cal_search) config.grid = {cal_temperature};
      const condet::TemperatureSearch search =
          condet::search_temperature(corpus, dets, config, {}, opts.threads);
      const std::vector<condet::Detection> scaled =
          condet::scale_scores(dets, search.best_temperature);
      const std::string curve = condet::calibration_to_json(search).dump(2) + "\n";
      std::cout << curve;
      write_output(opts, "calibration_curve.json", curve);
      write_output(opts, "detections_calibrated.json",
                   condet::detections_to_json(scaled).dump(2) + "\n");
      return 0;
    }

    if (*replay) {
      const condet::Corpus corpus = condet::parse_annotations(replay_ann);
      print_warnings(corpus);
      if (!replay_rare.empty()) {
        replay_config.rare_categories =
            std::set<int>(replay_rare.begin(), replay_rare.end());
      }
      const std::vector<std::int64_t> selection =
          condet::select_replay(corpus, replay_task, replay_config);
      ordered_json out;
      out["task_id"] = replay_task;
      out["image_ids"] = selection;
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*distill) {
      const condet::ProposalSet teacher = condet::parse_proposals(teacher_path);
      const condet::ProposalSet student = condet::parse_proposals(student_path);
      distill_config.seed = opts.seed;
      distill_config.reduction = reduction == "sum" ? condet::LossReduction::Sum
                                                    : condet::LossReduction::Mean;
      const condet::DistillSelection sel = condet::distill_select(teacher, distill_config);
      const double loss = condet::distill_l2_loss(teacher, student, sel.sampled,
                                                  distill_config.reduction);
      ordered_json out;
      out["candidates"] = sel.candidates;
      out["sampled"] = sel.sampled;
      out["loss"] = loss;
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*config_check) {
      const condet::TrainConfig config = condet::parse_train_config(train_path);
      ordered_json out;
      out["config"] = condet::train_config_to_json(config);
      out["lr_schedule"] = ordered_json::array();
      for (int epoch = 0; epoch < config.epochs; ++epoch) {
        out["lr_schedule"].push_back(condet::lr_at_epoch(config, epoch));
      }
      std::cout << out.dump(2) << "\n";
      return 0;
    }

    if (*pipeline_cmd) {
      condet::RunManifest manifest = condet::parse_manifest(manifest_path);
      if (app.count("--seed") > 0) manifest.seed = opts.seed;
      if (!opts.output_dir.empty()) manifest.output_dir = opts.output_dir;
      const condet::PipelineResult result = condet::run_pipeline(manifest, opts.threads);
      std::cout << "wrote " << result.files_written.size() << " files to "
                << result.output_dir << "\n";
      return 0;
    }
  } catch (const condet::ParseError& e) {
    ordered_json err{{"error", {{"type", "parse"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const condet::ValidationError& e) {
    ordered_json err{{"error", {{"type", "validation"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    ordered_json err{{"error", {{"type", "compute"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
