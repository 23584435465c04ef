#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cforge/activations.hpp"
#include "cforge/kg_model.hpp"
#include "cforge/probes.hpp"

namespace cforge::experiments {

struct Summary {
  double mean = 0.0;
  double sem = 0.0;  // sample sd / sqrt(n); 0 when n < 2
  std::size_t n = 0;
};

Summary summarize(const std::vector<double>& values);

/// One curve over layers (or sizes) with its uncertainty.
struct MetricSeries {
  std::string name;
  std::string x_label = "layer";
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> sem;
  std::vector<std::size_t> n;
  std::vector<double> band_lo;  // optional min/max band, empty or x-sized
  std::vector<double> band_hi;
  std::vector<std::string> warnings;

  void push(double x_value, const Summary& s);
  void validate() const;
};

nlohmann::json to_json(const MetricSeries& series);
MetricSeries series_from_json(const nlohmann::json& doc);
std::string to_csv(const MetricSeries& series);

using CavStack = std::map<int, probes::Cav>;  // by layer
using CarStack = std::map<int, probes::Car>;

/// Every layer of `layers` must be present in each stack; empty `layers`
/// means all layers of the positive stack.
std::vector<int> resolve_layers(const acts::LayerStack& stack, const std::vector<int>& layers);

struct ResamplingOptions {
  std::vector<int> layers;
  int reps = 10;
  std::size_t n_per_class = 200;
  std::uint64_t seed = 0;
  probes::Hyperparams hp;
};

struct ResamplingResult {
  MetricSeries per_layer;  // mean +- SEM of the C(reps, 2) pairwise cosines
  Summary layer_average;   // pooled over all layers' pairs
};

/// CAVs trained against `reps` independently drawn negative sets with fixed
/// positives.
ResamplingResult negative_resampling(const acts::LayerStack& pos, const acts::LayerStack& neg_pool,
                                     const ResamplingOptions& options);

enum class ProbeKind { cav, car };
std::string_view to_string(ProbeKind kind) noexcept;

struct SizeSweepOptions {
  std::vector<int> layers;
  std::vector<std::size_t> sizes{30, 50, 200, 1000};
  std::vector<ProbeKind> kinds{ProbeKind::cav, ProbeKind::car};
  int folds = 10;
  std::uint64_t seed = 0;
  probes::Hyperparams hp;
  probes::SvmOptions svm;
};

/// k-fold CV accuracy per layer, one series per (kind, size). Sizes larger
/// than the available data are trimmed and flagged.
std::vector<MetricSeries> size_sweep(const acts::LayerStack& pos, const acts::LayerStack& neg,
                                     const SizeSweepOptions& options);

struct TransferOptions {
  std::vector<int> layers;
  std::size_t n_per_class = 200;
  std::uint64_t seed = 0;
  std::vector<ProbeKind> kinds{ProbeKind::cav, ProbeKind::car};
  probes::Hyperparams hp;
  probes::SvmOptions svm;
};

/// Probes trained on the first dataset, evaluated on up to n_per_class per
/// class from the second. Rows used for training are never evaluated.
std::vector<MetricSeries> ood_transfer(const acts::LayerStack& train_pos, const acts::LayerStack& train_neg,
                                       const acts::LayerStack& test_pos, const acts::LayerStack& test_neg,
                                       const TransferOptions& options);

/// Per-layer cosine between two CAV stacks and a coordinate-permutation
/// baseline (mean, SEM and min/max band over `permutations`).
std::pair<MetricSeries, MetricSeries> cav_cross_dataset_cosine(const CavStack& a, const CavStack& b,
                                                               int permutations = 100, std::uint64_t seed = 0);

/// CAV stacks keyed by concept node key.
using ConceptCavs = std::map<std::string, CavStack>;

struct GroupRow {
  std::string group;  // root key, or "non-related" for inter-group pairs
  std::string label;
  double mean = 0.0;
  double sem = 0.0;
  std::size_t pairs = 0;
};

struct GroupTable {
  std::vector<GroupRow> rows;
  std::vector<int> layers;
  std::size_t triplets = 0;  // triplet experiment only
  bool exhaustive = false;
  std::size_t ties = 0;
  std::vector<std::string> tie_examples;
};

nlohmann::json to_json(const GroupTable& table);

inline constexpr std::string_view kNonRelated = "non-related";

/// Mean +- SEM of pairwise CAV cosines within each graph and across graphs,
/// computed per layer and averaged over layers.
GroupTable group_cosine(const std::vector<kg::ConceptGraph>& graphs, const ConceptCavs& cavs,
                        std::vector<int> layers = {});

struct TripletOptions {
  std::size_t n_triplets = 200000;
  std::size_t exhaustive_limit = 200000;  // enumerate every triplet up to this many
  std::uint64_t seed = 0;
  std::vector<int> layers;
};

/// Triplets with exactly two members from one graph. Per pair, the share of
/// its triplet appearances in which it had the strictly largest cosine,
/// averaged over intra-group pairs per graph and over inter-group pairs.
GroupTable triplet_experiment(const std::vector<kg::ConceptGraph>& graphs, const ConceptCavs& cavs,
                              const TripletOptions& options = {});

/// Number of valid triplets for the given group sizes.
std::size_t count_triplets(const std::vector<std::size_t>& group_sizes);

struct SubconceptOptions {
  std::size_t cap = 10000;
  std::uint64_t seed = 0;
};

/// Per sub-concept, per layer: fraction of its rows the main-concept probe
/// labels positive.
std::vector<MetricSeries> subconcept_classification(const CarStack& main_car,
                                                    const std::map<std::string, acts::LayerStack>& sub_data,
                                                    const SubconceptOptions& options = {});
std::vector<MetricSeries> subconcept_classification(const CavStack& main_cav,
                                                    const std::map<std::string, acts::LayerStack>& sub_data,
                                                    const SubconceptOptions& options = {});

/// Row indices kept after capping `rows` at `cap` with a seeded subsample.
std::vector<std::size_t> capped_rows(std::size_t rows, std::size_t cap, std::uint64_t seed);

/// Runs `fn(i)` for i in [0, n) on up to hardware_concurrency threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cforge::experiments
