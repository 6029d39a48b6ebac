#include "condet/report.hpp"

#include <sstream>

#include "condet/numeric.hpp"

namespace condet {

using nlohmann::ordered_json;

namespace {

std::string percent_or_na(const std::optional<double>& fraction) {
  return fraction ? format_percent(*fraction) : std::string("n/a");
}

void table_rule(std::ostringstream& out, std::size_t columns) {
  out << "|";
  for (std::size_t i = 0; i < columns; ++i) out << " --- |";
  out << "\n";
}

ordered_json json_or_null(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

}  // namespace

std::string format_summary_table(const CorpusSummary& summary,
                                 const std::vector<Category>& categories) {
  std::ostringstream out;
  out << "| Task | Images |";
  for (const Category& c : categories) out << " " << c.name << " |";
  out << "\n";
  table_rule(out, categories.size() + 2);
  for (std::size_t row = 0; row < summary.task_ids.size(); ++row) {
    out << "| " << summary.task_ids[row] << " | " << summary.images_per_task[row]
        << " |";
    for (std::int64_t count : summary.instances[row]) out << " " << count << " |";
    out << "\n";
  }
  return out.str();
}

std::string format_eval_table(const EvalReport& report, const std::string& label) {
  std::ostringstream out;
  out << "| Model |";
  for (const TaskEval& te : report.per_task) out << " Task " << te.task_id << " |";
  out << " Average |\n";
  table_rule(out, report.per_task.size() + 2);
  out << "| " << label << " |";
  for (const TaskEval& te : report.per_task) out << " " << percent_or_na(te.map) << " |";
  out << " " << percent_or_na(report.task_average) << " |\n";
  return out.str();
}

std::string format_tide_tables(const TideReport& report,
                               const std::vector<Category>& categories) {
  std::ostringstream out;
  out << "**Main Errors**\n\n";
  out << "| Type | Classification | Localization | Both | Duplicate | Bkg | Miss |\n";
  table_rule(out, 7);
  out << "| dAP |";
  for (int t = 0; t < kNumErrorTypes; ++t) {
    out << " " << format_percent(report.dap[static_cast<std::size_t>(t)]) << " |";
  }
  out << "\n\n";

  out << "**Special Errors**\n\n";
  out << "| Type | False Positives | False Negatives |\n";
  table_rule(out, 3);
  out << "| dAP | " << format_percent(report.dap_false_positive) << " | "
      << format_percent(report.dap_false_negative) << " |\n\n";

  out << "**Classification Errors (true class x predicted class)**\n\n";
  out << "| True class |";
  for (const Category& c : categories) out << " " << c.name << " |";
  out << "\n";
  table_rule(out, categories.size() + 1);
  for (std::size_t i = 0; i < categories.size(); ++i) {
    out << "| " << categories[i].name << " |";
    for (std::size_t j = 0; j < categories.size(); ++j) {
      out << " " << report.confusion[i][j] << " |";
    }
    out << "\n";
  }
  return out.str();
}

std::string format_tables(const EvalReport& eval, const TideReport& tide,
                          const std::vector<Category>& categories,
                          const std::string& label) {
  return format_eval_table(eval, label) + "\n" + format_tide_tables(tide, categories);
}

ordered_json summary_to_json(const CorpusSummary& summary,
                             const std::vector<Category>& categories) {
  ordered_json out;
  out["tasks"] = ordered_json::array();
  for (std::size_t row = 0; row < summary.task_ids.size(); ++row) {
    ordered_json instances;
    for (std::size_t c = 0; c < categories.size(); ++c) {
      instances[categories[c].name] = summary.instances[row][c];
    }
    out["tasks"].push_back({{"task_id", summary.task_ids[row]},
                            {"images", summary.images_per_task[row]},
                            {"instances", std::move(instances)},
                            {"total_instances", summary.task_total(row)}});
  }
  return out;
}

ordered_json eval_report_to_json(const EvalReport& report) {
  ordered_json out;
  out["config"] = {{"iou_thresholds", report.config.iou_thresholds},
                   {"recall_points", report.config.recall_points},
                   {"max_detections_per_image", report.config.max_detections_per_image}};
  out["per_category"] = ordered_json::array();
  for (const CategoryEval& ce : report.per_category) {
    ordered_json by_thr = ordered_json::array();
    for (const auto& ap : ce.ap_by_threshold) by_thr.push_back(json_or_null(ap));
    out["per_category"].push_back({{"category_id", ce.category_id},
                                   {"ap", json_or_null(ce.ap)},
                                   {"ap_by_threshold", std::move(by_thr)}});
  }
  out["map"] = json_or_null(report.map);
  out["per_task"] = ordered_json::array();
  for (const TaskEval& te : report.per_task) {
    out["per_task"].push_back({{"task_id", te.task_id}, {"map", json_or_null(te.map)}});
  }
  out["task_average"] = json_or_null(report.task_average);
  return out;
}

ordered_json tide_report_to_json(const TideReport& report,
                                 const std::vector<Category>& categories) {
  ordered_json out;
  out["config"] = {{"foreground_iou", report.config.foreground_iou},
                   {"background_iou", report.config.background_iou},
                   {"base_iou_for_dap", report.config.base_iou_for_dap}};
  out["base_map"] = json_or_null(report.base_map);
  ordered_json dap;
  ordered_json counts;
  for (int t = 0; t < kNumErrorTypes; ++t) {
    const std::string name = error_type_name(static_cast<ErrorType>(t));
    dap[name] = report.dap[static_cast<std::size_t>(t)];
    counts[name] = report.counts[static_cast<std::size_t>(t)];
  }
  out["dap"] = std::move(dap);
  out["error_counts"] = std::move(counts);
  out["special"] = {{"false_positive", report.dap_false_positive},
                    {"false_negative", report.dap_false_negative}};
  out["confusion"] = report.confusion;
  out["confusion_labels"] = ordered_json::array();
  for (const Category& c : categories) out["confusion_labels"].push_back(c.name);
  return out;
}

ordered_json calibration_to_json(const TemperatureSearch& search) {
  ordered_json out;
  out["objective"] = objective_name(search.objective);
  out["best_temperature"] = search.best_temperature;
  out["curve"] = ordered_json::array();
  for (const auto& [t, value] : search.curve) {
    out["curve"].push_back({{"temperature", t}, {"value", value}});
  }
  return out;
}

}  // namespace condet
