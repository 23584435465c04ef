#include "cforge/report.hpp"

#include <algorithm>
#include <regex>

#include "cforge/error.hpp"
#include "cforge/io.hpp"

namespace cforge::experiments {

namespace fs = std::filesystem;

namespace {

bool safe_component(const std::string& s) {
  static const std::regex allowed(R"([A-Za-z0-9_.-]+)");
  return !s.empty() && s != "." && s != ".." && std::regex_match(s, allowed);
}

std::string file_name_for(const std::string& series_name) {
  std::string out;
  for (char c : series_name) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return out.empty() ? "series" : out;
}

}  // namespace

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json series = nlohmann::json::array();
  for (const auto& s : report.series) series.push_back(to_json(s));
  return {{"experiment", report.experiment}, {"id", report.id},
          {"config", report.config},         {"series", series},
          {"tables", report.tables},         {"summary", report.summary},
          {"artifacts", report.artifacts},   {"warnings", report.warnings},
          {"started_at", report.started_at}, {"finished_at", report.finished_at}};
}

ExperimentReport report_from_json(const nlohmann::json& doc) {
  ExperimentReport r;
  try {
    r.experiment = doc.at("experiment").get<std::string>();
    r.id = doc.value("id", std::string{});
    r.config = doc.value("config", nlohmann::json::object());
    for (const auto& s : doc.at("series")) r.series.push_back(series_from_json(s));
    r.tables = doc.value("tables", nlohmann::json::object());
    r.summary = doc.value("summary", nlohmann::json::object());
    r.artifacts = doc.value("artifacts", std::vector<std::string>{});
    r.warnings = doc.value("warnings", std::vector<std::string>{});
    r.started_at = doc.value("started_at", std::string{});
    r.finished_at = doc.value("finished_at", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("report: ") + e.what());
  }
  return r;
}

fs::path write_report(ExperimentReport& report, const fs::path& runs_root, std::string timestamp) {
  if (!safe_component(report.experiment)) {
    throw Error(Errc::invalid_argument, "invalid experiment name '" + report.experiment + "'");
  }
  if (timestamp.empty()) timestamp = io::compact_timestamp();
  auto stamp = timestamp;
  for (int k = 1; fs::exists(runs_root / report.experiment / stamp); ++k) stamp = timestamp + "-" + std::to_string(k);
  const auto dir = runs_root / report.experiment / stamp;
  fs::create_directories(dir / "series");
  report.id = report.experiment + "/" + stamp;
  report.artifacts.clear();
  std::vector<std::string> used;
  for (const auto& s : report.series) {
    auto name = file_name_for(s.name);
    auto candidate = name;
    for (int k = 1; std::find(used.begin(), used.end(), candidate) != used.end(); ++k) {
      candidate = name + "_" + std::to_string(k);
    }
    used.push_back(candidate);
    io::write_atomic(dir / "series" / (candidate + ".csv"), to_csv(s));
    report.artifacts.push_back("series/" + candidate + ".csv");
  }
  io::write_json(dir / "config.json", report.config);
  io::write_json(dir / "report.json", to_json(report));
  return dir;
}

ExperimentReport read_report(const fs::path& dir) { return report_from_json(io::read_json(dir / "report.json")); }

std::vector<std::string> list_runs(const fs::path& runs_root) {
  std::vector<std::string> out;
  if (!fs::is_directory(runs_root)) return out;
  for (const auto& exp : fs::directory_iterator(runs_root)) {
    if (!exp.is_directory()) continue;
    for (const auto& run : fs::directory_iterator(exp.path())) {
      if (fs::exists(run.path() / "report.json")) {
        out.push_back(exp.path().filename().string() + "/" + run.path().filename().string());
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

fs::path run_dir(const fs::path& runs_root, const std::string& run_id) {
  const auto slash = run_id.find('/');
  if (slash == std::string::npos || !safe_component(run_id.substr(0, slash)) ||
      !safe_component(run_id.substr(slash + 1))) {
    throw Error(Errc::invalid_argument, "invalid run id '" + run_id + "'");
  }
  const auto dir = runs_root / run_id.substr(0, slash) / run_id.substr(slash + 1);
  if (!fs::exists(dir / "report.json")) throw Error(Errc::not_found, "no report for run '" + run_id + "'");
  return dir;
}

}  // namespace cforge::experiments
