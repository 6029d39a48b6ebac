#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "condet/calibration.hpp"
#include "condet/corpus.hpp"
#include "condet/map_eval.hpp"
#include "condet/tide.hpp"

namespace condet {

/// Markdown table of per-task image and instance counts.
std::string format_summary_table(const CorpusSummary& summary,
                                 const std::vector<Category>& categories);

/// One-row markdown table: per-task mAP columns plus the task average, as
/// percentages with two half-up decimals ("n/a" where undefined).
std::string format_eval_table(const EvalReport& report, const std::string& label);

/// Two markdown blocks: main-error dAP row plus the special-error row, and
/// the cross-class confusion matrix.
std::string format_tide_tables(const TideReport& report,
                               const std::vector<Category>& categories);

std::string format_tables(const EvalReport& eval, const TideReport& tide,
                          const std::vector<Category>& categories,
                          const std::string& label);

nlohmann::ordered_json summary_to_json(const CorpusSummary& summary,
                                       const std::vector<Category>& categories);
nlohmann::ordered_json eval_report_to_json(const EvalReport& report);
nlohmann::ordered_json tide_report_to_json(const TideReport& report,
                                           const std::vector<Category>& categories);
nlohmann::ordered_json calibration_to_json(const TemperatureSearch& search);

}  // namespace condet
