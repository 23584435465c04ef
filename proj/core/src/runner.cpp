#include "cforge/runner.hpp"

#include <algorithm>
#include <regex>

#include <spdlog/spdlog.h>

#include "cforge/error.hpp"
#include "cforge/io.hpp"

namespace cforge::experiments {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dir_key(std::string_view key) {
  std::string out(key);
  std::replace(out.begin(), out.end(), ':', '_');
  return out;
}

template <typename T>
T required(const json& config, const char* key) {
  if (!config.contains(key)) throw Error(Errc::invalid_argument, std::string("config is missing '") + key + "'");
  try {
    return config.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("config '") + key + "': " + e.what());
  }
}

probes::Hyperparams hp_of(const json& config) {
  return config.contains("hp") ? probes::hyperparams_from_json(config["hp"]) : probes::Hyperparams{};
}

probes::SvmOptions svm_of(const json& config) {
  probes::SvmOptions svm;
  if (!config.contains("svm")) return svm;
  const auto& s = config["svm"];
  svm.C = s.value("C", svm.C);
  if (s.contains("gamma") && !s["gamma"].is_null()) svm.gamma = s["gamma"].get<double>();
  svm.eps = s.value("eps", svm.eps);
  return svm;
}

std::vector<ProbeKind> kinds_of(const json& config) {
  std::vector<ProbeKind> kinds;
  for (const auto& k : config.value("kinds", std::vector<std::string>{"cav", "car"})) {
    if (k == "cav") {
      kinds.push_back(ProbeKind::cav);
    } else if (k == "car") {
      kinds.push_back(ProbeKind::car);
    } else {
      throw Error(Errc::invalid_argument, "unknown probe kind '" + k + "'");
    }
  }
  return kinds;
}

acts::LayerStack load_split(const fs::path& acts_dir, const std::string& model, const std::string& key,
                            const std::string& split, const std::vector<int>& layers) {
  auto stack = acts::load_layer_stack(acts_dir, model, dir_key(key), split);
  if (layers.empty()) return stack;
  acts::LayerStack out;
  for (int layer : layers) {
    auto it = stack.find(layer);
    if (it == stack.end()) {
      throw Error(Errc::not_found, key + "/" + split + " has no layer " + std::to_string(layer));
    }
    out.emplace(layer, std::move(it->second));
  }
  return out;
}

struct Common {
  fs::path acts_dir;
  std::string model;
  std::string concept_key;
  std::vector<int> layers;
  std::uint64_t seed = 0;
};

Common common_of(const json& config, bool needs_concept = true) {
  Common c;
  c.acts_dir = config.value("acts_dir", std::string{});
  c.model = config.value("model_id", std::string{});
  if (needs_concept) {
    c.acts_dir = required<std::string>(config, "acts_dir");
    c.model = required<std::string>(config, "model_id");
    c.concept_key = required<std::string>(config, "concept");
  }
  c.layers = config.value("layers", std::vector<int>{});
  c.seed = config.value("seed", std::uint64_t{0});
  return c;
}

acts::LayerStack negatives_of(const json& config, const Common& c) {
  const auto neg = config.value("negatives", json::object());
  return load_split(c.acts_dir, c.model, neg.value("concept", c.concept_key), neg.value("split", std::string("negative")),
                    c.layers);
}

std::vector<kg::ConceptGraph> graphs_of(const json& config) {
  std::vector<kg::ConceptGraph> graphs;
  for (const auto& path : required<std::vector<std::string>>(config, "graphs")) {
    graphs.push_back(kg::ConceptGraph::from_json(io::read_json(path)));
  }
  return graphs;
}

ConceptCavs cavs_for(const std::vector<kg::ConceptGraph>& graphs, const json& config) {
  const fs::path probes_dir = required<std::string>(config, "probes_dir");
  const auto model = required<std::string>(config, "model_id");
  ConceptCavs cavs;
  for (const auto& g : graphs) {
    for (const auto& [key, node] : g.nodes()) {
      cavs[key] = load_cav_stack(probe_stem(probes_dir, model, key, ProbeKind::cav, 0).parent_path());
    }
  }
  return cavs;
}

ExperimentReport run_negative_resampling(const json& config) {
  const auto c = common_of(config);
  ResamplingOptions o;
  o.layers = c.layers;
  o.seed = c.seed;
  o.reps = config.value("reps", o.reps);
  o.n_per_class = config.value("n_per_class", o.n_per_class);
  o.hp = hp_of(config);
  const auto result = negative_resampling(load_split(c.acts_dir, c.model, c.concept_key, "positive", c.layers),
                                          negatives_of(config, c), o);
  ExperimentReport r;
  r.series.push_back(result.per_layer);
  r.summary["layer_average"] = {{"mean", result.layer_average.mean},
                                {"sem", result.layer_average.sem},
                                {"n", result.layer_average.n}};
  return r;
}

ExperimentReport run_size_sweep(const json& config) {
  const auto c = common_of(config);
  SizeSweepOptions o;
  o.layers = c.layers;
  o.seed = c.seed;
  o.sizes = config.value("sizes", o.sizes);
  o.kinds = kinds_of(config);
  o.folds = config.value("folds", o.folds);
  o.hp = hp_of(config);
  o.svm = svm_of(config);
  ExperimentReport r;
  r.series = size_sweep(load_split(c.acts_dir, c.model, c.concept_key, "positive", c.layers), negatives_of(config, c), o);
  return r;
}

ExperimentReport run_ood_transfer(const json& config) {
  const auto c = common_of(config);
  const auto test = required<json>(config, "test");
  const fs::path test_dir = test.value("acts_dir", c.acts_dir.string());
  const auto test_key = test.value("concept", c.concept_key);
  TransferOptions o;
  o.layers = c.layers;
  o.seed = c.seed;
  o.n_per_class = config.value("n_per_class", o.n_per_class);
  o.kinds = kinds_of(config);
  o.hp = hp_of(config);
  o.svm = svm_of(config);
  ExperimentReport r;
  r.series = ood_transfer(load_split(c.acts_dir, c.model, c.concept_key, "positive", c.layers), negatives_of(config, c),
                          load_split(test_dir, c.model, test_key, test.value("positive_split", std::string("positive")),
                                     c.layers),
                          load_split(test_dir, c.model, test_key, test.value("negative_split", std::string("negative")),
                                     c.layers),
                          o);
  return r;
}

ExperimentReport run_cross_dataset(const json& config) {
  const auto c = common_of(config, false);
  auto [cos, base] = cav_cross_dataset_cosine(load_cav_stack(required<std::string>(config, "cavs_a")),
                                              load_cav_stack(required<std::string>(config, "cavs_b")),
                                              config.value("permutations", 100), c.seed);
  ExperimentReport r;
  r.series = {cos, base};
  return r;
}

ExperimentReport run_group_cosine(const json& config) {
  const auto graphs = graphs_of(config);
  const auto table = group_cosine(graphs, cavs_for(graphs, config), config.value("layers", std::vector<int>{}));
  ExperimentReport r;
  r.tables["group_cosine"] = to_json(table);
  return r;
}

ExperimentReport run_triplets(const json& config) {
  const auto graphs = graphs_of(config);
  TripletOptions o;
  o.layers = config.value("layers", std::vector<int>{});
  o.seed = config.value("seed", std::uint64_t{0});
  o.n_triplets = config.value("n_triplets", o.n_triplets);
  o.exhaustive_limit = config.value("exhaustive_limit", o.exhaustive_limit);
  const auto table = triplet_experiment(graphs, cavs_for(graphs, config), o);
  ExperimentReport r;
  r.tables["triplets"] = to_json(table);
  if (table.ties > 0) r.warnings.push_back(std::to_string(table.ties) + " tied triplet decisions");
  return r;
}

ExperimentReport run_subconcepts(const json& config) {
  const auto c = common_of(config);
  const auto pos = load_split(c.acts_dir, c.model, c.concept_key, "positive", c.layers);
  const auto neg = negatives_of(config, c);
  std::map<std::string, acts::LayerStack> sub;
  for (const auto& key : required<std::vector<std::string>>(config, "subconcepts")) {
    sub.emplace(key, load_split(c.acts_dir, c.model, key, config.value("subconcept_split", std::string("positive")),
                                c.layers));
  }
  SubconceptOptions o;
  o.cap = config.value("cap", o.cap);
  o.seed = c.seed;
  acts::ProbeSetOptions po;
  po.n_per_class = config.value("n_per_class", std::size_t{200});
  po.seed = c.seed;
  const auto probe = config.value("probe", std::string("car"));
  ExperimentReport r;
  if (probe == "car") {
    CarStack cars;
    for (const auto& [layer, m] : pos) cars.emplace(layer, probes::train_car(acts::make_probe_set(m, neg.at(layer), po), svm_of(config)));
    r.series = subconcept_classification(cars, sub, o);
  } else if (probe == "cav") {
    CavStack cavs;
    for (const auto& [layer, m] : pos) cavs.emplace(layer, probes::train_cav(acts::make_probe_set(m, neg.at(layer), po), hp_of(config)));
    r.series = subconcept_classification(cavs, sub, o);
    r.warnings.push_back("CAV-based sub-concept classification is noisy; CAR is the reference probe");
  } else {
    throw Error(Errc::invalid_argument, "probe must be 'car' or 'cav'");
  }
  return r;
}

using Runner = ExperimentReport (*)(const json&);

const std::map<std::string, Runner>& runners() {
  static const std::map<std::string, Runner> table{
      {"negative_resampling", run_negative_resampling},
      {"size_sweep", run_size_sweep},
      {"ood_transfer", run_ood_transfer},
      {"cross_dataset_cosine", run_cross_dataset},
      {"group_cosine", run_group_cosine},
      {"triplets", run_triplets},
      {"subconcept_classification", run_subconcepts},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : runners()) out.push_back(name);
    return out;
  }();
  return names;
}

ExperimentReport run_experiment(const json& config) {
  const auto name = required<std::string>(config, "experiment");
  auto it = runners().find(name);
  if (it == runners().end()) throw Error(Errc::invalid_argument, "unknown experiment '" + name + "'");
  const auto started = io::utc_timestamp();
  spdlog::info("running {}", name);
  auto report = it->second(config);
  report.experiment = name;
  report.config = config;
  report.started_at = started;
  report.finished_at = io::utc_timestamp();
  for (const auto& s : report.series) {
    for (const auto& w : s.warnings) report.warnings.push_back(s.name + ": " + w);
  }
  return report;
}

fs::path run_and_write(const json& config, const fs::path& runs_root) {
  auto report = run_experiment(config);
  return write_report(report, runs_root);
}

ExperimentReport rerun(const fs::path& dir) { return run_experiment(io::read_json(dir / "config.json")); }

fs::path probe_stem(const fs::path& probes_root, std::string_view model_id, std::string_view concept_key, ProbeKind kind,
                    int layer) {
  return probes_root / std::string(model_id) / dir_key(concept_key) / std::string(to_string(kind)) /
         ("layer_" + std::to_string(layer));
}

std::vector<fs::path> train_probes(const TrainRequest& req) {
  const auto pos = load_split(req.acts_dir, req.model_id, req.concept_key, "positive", req.layers);
  const auto neg = load_split(req.acts_dir, req.model_id, req.negatives_key.empty() ? req.concept_key : req.negatives_key,
                              req.negative_split, req.layers);
  std::vector<fs::path> written;
  for (const auto& [layer, p] : pos) {
    acts::ProbeSetOptions po;
    po.n_per_class = req.n_per_class;
    po.seed = req.seed;
    const auto set = acts::make_probe_set(p, neg.at(layer), po);
    for (auto kind : req.kinds) {
      const auto stem = probe_stem(req.probes_dir, req.model_id, req.concept_key, kind, layer);
      if (kind == ProbeKind::cav) {
        auto cav = probes::train_cav(set, req.hp);
        probes::save_cav(cav, stem);
        spdlog::info("layer {} CAV test accuracy {:.3f}", layer, cav.test_accuracy);
      } else {
        auto car = probes::train_car(set, req.svm);
        probes::save_car(car, stem);
        spdlog::info("layer {} CAR test accuracy {:.3f}", layer, car.test_accuracy);
      }
      written.push_back(stem);
    }
  }
  return written;
}

namespace {

template <typename Stack, typename Loader>
Stack load_stack(const fs::path& dir, Loader load) {
  if (!fs::is_directory(dir)) throw Error(Errc::not_found, "no probes at " + dir.string());
  static const std::regex pattern(R"(layer_(\d+)\.json)");
  Stack stack;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    auto stem = entry.path();
    stem.replace_extension();
    auto probe = load(stem);
    stack.emplace(std::stoi(m[1]), std::move(probe));
  }
  if (stack.empty()) throw Error(Errc::not_found, "no probes at " + dir.string());
  return stack;
}

}  // namespace

CavStack load_cav_stack(const fs::path& dir) { return load_stack<CavStack>(dir, probes::load_cav); }
CarStack load_car_stack(const fs::path& dir) { return load_stack<CarStack>(dir, probes::load_car); }

}  // namespace cforge::experiments
