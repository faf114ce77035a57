#pragma once

#include <string>

#include "nlohmann/json.hpp"

#include "fedexdnn/orchestrator.hpp"

namespace fedexdnn {

// Parses the experiment JSON. Unknown keys and bad values raise ContractError
// naming the offending field.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);

// Fully resolved config (all defaults materialized); keys are sorted, so the
// dump is canonical.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// Round report JSON. Deliberately excludes wall time so identical runs
// produce byte-identical files; timing goes to summary.csv.
nlohmann::json report_to_json(const RoundReport& report);

// One CSV row per report: round,aggregator,auc,f1,precision,recall,threshold,seconds
std::string summary_csv(const std::vector<RoundReport>& reports);

}  // namespace fedexdnn
