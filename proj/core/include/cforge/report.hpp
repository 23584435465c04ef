#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cforge/experiments.hpp"

namespace cforge::experiments {

struct ExperimentReport {
  std::string experiment;
  std::string id;  // "<experiment>/<timestamp>" once written
  nlohmann::json config = nlohmann::json::object();
  std::vector<MetricSeries> series;
  nlohmann::json tables = nlohmann::json::object();
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> artifacts;
  std::vector<std::string> warnings;
  std::string started_at;
  std::string finished_at;
};

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& doc);

/// Writes `<runs>/<experiment>/<timestamp>/{report.json,config.json,series/*.csv}`
/// and fills in the report id and artifact list. Returns the run directory.
std::filesystem::path write_report(ExperimentReport& report, const std::filesystem::path& runs_root,
                                   std::string timestamp = {});
ExperimentReport read_report(const std::filesystem::path& run_dir);

/// Run ids ("experiment/timestamp") under the runs root, sorted.
std::vector<std::string> list_runs(const std::filesystem::path& runs_root);
/// Resolves a run id to its directory; rejects ids that escape the root.
std::filesystem::path run_dir(const std::filesystem::path& runs_root, const std::string& run_id);

}  // namespace cforge::experiments
