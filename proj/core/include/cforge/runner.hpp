#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cforge/experiments.hpp"
#include "cforge/report.hpp"

namespace cforge::experiments {

/// Experiments a config can name.
const std::vector<std::string>& experiment_names();

/// Runs the experiment described by `config`. The config is self-contained
/// (paths, seeds, hyperparameters), so running it again yields identical
/// numbers. Keys:
///   experiment, acts_dir, model_id, concept, layers, seed, hp, svm and the
///   experiment-specific keys documented in the README.
ExperimentReport run_experiment(const nlohmann::json& config);

/// Runs and writes the report under `runs_root`; returns the run directory.
std::filesystem::path run_and_write(const nlohmann::json& config, const std::filesystem::path& runs_root);

/// Re-executes a stored run from its config.json.
ExperimentReport rerun(const std::filesystem::path& run_dir);

/// `<probes>/<model_id>/<concept key>/<kind>/layer_<i>` (stem; .json/.actv appended).
std::filesystem::path probe_stem(const std::filesystem::path& probes_root, std::string_view model_id,
                                 std::string_view concept_key, ProbeKind kind, int layer);

struct TrainRequest {
  std::filesystem::path acts_dir;
  std::filesystem::path probes_dir;
  std::string model_id;
  std::string concept_key;
  std::string negatives_key;  // defaults to concept_key
  std::string negative_split = "negative";
  std::vector<int> layers;
  std::vector<ProbeKind> kinds{ProbeKind::cav, ProbeKind::car};
  std::size_t n_per_class = 200;
  std::uint64_t seed = 0;
  probes::Hyperparams hp;
  probes::SvmOptions svm;
};

/// Trains one probe per (layer, kind) and saves it; returns the written stems.
std::vector<std::filesystem::path> train_probes(const TrainRequest& request);

CavStack load_cav_stack(const std::filesystem::path& dir);
CarStack load_car_stack(const std::filesystem::path& dir);

}  // namespace cforge::experiments
