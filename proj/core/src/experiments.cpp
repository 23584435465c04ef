#include "cforge/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "cforge/error.hpp"
#include "cforge/random.hpp"

namespace cforge::experiments {

using acts::ActivationMatrix;
using acts::LayerStack;

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) throw Error(Errc::invalid_argument, "cannot summarize an empty sample");
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  s.sem = sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

void MetricSeries::push(double x_value, const Summary& s) {
  x.push_back(x_value);
  mean.push_back(s.mean);
  sem.push_back(s.sem);
  n.push_back(s.n);
}

void MetricSeries::validate() const {
  const auto len = x.size();
  if (mean.size() != len || sem.size() != len || n.size() != len) {
    throw Error(Errc::invalid_argument, "series '" + name + "' has columns of unequal length");
  }
  if (!band_lo.empty() && (band_lo.size() != len || band_hi.size() != len)) {
    throw Error(Errc::invalid_argument, "series '" + name + "' band length mismatch");
  }
  for (double s : sem) {
    if (!(s >= 0)) throw Error(Errc::invalid_argument, "series '" + name + "' has a negative SEM");
  }
}

nlohmann::json to_json(const MetricSeries& series) {
  series.validate();
  nlohmann::json doc{{"name", series.name}, {"x_label", series.x_label}, {"x", series.x},
                     {"mean", series.mean}, {"sem", series.sem},         {"n", series.n}};
  if (!series.band_lo.empty()) {
    doc["band_lo"] = series.band_lo;
    doc["band_hi"] = series.band_hi;
  }
  if (!series.warnings.empty()) doc["warnings"] = series.warnings;
  return doc;
}

MetricSeries series_from_json(const nlohmann::json& doc) {
  MetricSeries s;
  try {
    s.name = doc.at("name").get<std::string>();
    s.x_label = doc.value("x_label", s.x_label);
    s.x = doc.at("x").get<std::vector<double>>();
    s.mean = doc.at("mean").get<std::vector<double>>();
    s.sem = doc.at("sem").get<std::vector<double>>();
    s.n = doc.at("n").get<std::vector<std::size_t>>();
    if (doc.contains("band_lo")) {
      s.band_lo = doc.at("band_lo").get<std::vector<double>>();
      s.band_hi = doc.at("band_hi").get<std::vector<double>>();
    }
    if (doc.contains("warnings")) s.warnings = doc.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("metric series: ") + e.what());
  }
  s.validate();
  return s;
}

std::string to_csv(const MetricSeries& series) {
  series.validate();
  std::ostringstream out;
  out.precision(17);
  const bool band = !series.band_lo.empty();
  out << series.x_label << ",mean,sem,n" << (band ? ",band_lo,band_hi" : "") << "\n";
  for (std::size_t i = 0; i < series.x.size(); ++i) {
    out << series.x[i] << ',' << series.mean[i] << ',' << series.sem[i] << ',' << series.n[i];
    if (band) out << ',' << series.band_lo[i] << ',' << series.band_hi[i];
    out << "\n";
  }
  return out.str();
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1U, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<int> resolve_layers(const LayerStack& stack, const std::vector<int>& layers) {
  if (layers.empty()) {
    std::vector<int> all;
    for (const auto& [layer, m] : stack) all.push_back(layer);
    if (all.empty()) throw Error(Errc::invalid_argument, "no layers available");
    return all;
  }
  for (int layer : layers) {
    if (!stack.contains(layer)) throw Error(Errc::not_found, "layer " + std::to_string(layer) + " missing");
  }
  return layers;
}

namespace {

const ActivationMatrix& layer_of(const LayerStack& stack, int layer, const char* what) {
  auto it = stack.find(layer);
  if (it == stack.end()) {
    throw Error(Errc::not_found, std::string(what) + " activations missing layer " + std::to_string(layer));
  }
  return it->second;
}

std::vector<double> correctness(const acts::Labels& predicted, const acts::Labels& y) {
  std::vector<double> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = predicted(i) == y(i) ? 1.0 : 0.0;
  return out;
}

ActivationMatrix take_rows(const ActivationMatrix& m, const std::vector<std::size_t>& rows) {
  ActivationMatrix out;
  out.layer_index = m.layer_index;
  out.model_id = m.model_id;
  out.pooling = m.pooling;
  out.concept_qid = m.concept_qid;
  out.data.resize(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.data.row(static_cast<Eigen::Index>(r)) = m.data.row(static_cast<Eigen::Index>(rows[r]));
    out.sample_ids.push_back(m.sample_ids[rows[r]]);
  }
  return out;
}

}  // namespace

ResamplingResult negative_resampling(const LayerStack& pos, const LayerStack& neg_pool,
                                     const ResamplingOptions& options) {
  if (options.reps < 2) throw Error(Errc::invalid_argument, "negative resampling needs at least two repetitions");
  const auto layers = resolve_layers(pos, options.layers);
  std::vector<std::vector<double>> cosines(layers.size());
  parallel_for(layers.size(), [&](std::size_t li) {
    const auto& p = layer_of(pos, layers[li], "positive");
    const auto& q = layer_of(neg_pool, layers[li], "negative");
    const auto n = std::min<std::size_t>(options.n_per_class, static_cast<std::size_t>(p.rows()));
    if (static_cast<std::size_t>(q.rows()) < n) {
      throw Error(Errc::invalid_argument, "insufficient negatives: pool has " + std::to_string(q.rows()) +
                                              " rows, need " + std::to_string(n));
    }
    std::vector<probes::Cav> cavs;
    for (int r = 0; r < options.reps; ++r) {
      acts::ProbeSetOptions po{.n_per_class = n, .train_frac = 0.8, .seed = options.seed,
                               .negative_seed = options.seed + 1 + static_cast<std::uint64_t>(r)};
      cavs.push_back(probes::train_cav(acts::make_probe_set(p, q, po), options.hp));
    }
    for (std::size_t a = 0; a < cavs.size(); ++a) {
      for (std::size_t b = a + 1; b < cavs.size(); ++b) cosines[li].push_back(probes::cosine(cavs[a], cavs[b]));
    }
  });
  ResamplingResult result;
  result.per_layer.name = "negative_resampling_cosine";
  std::vector<double> pooled;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    result.per_layer.push(layers[li], summarize(cosines[li]));
    pooled.insert(pooled.end(), cosines[li].begin(), cosines[li].end());
  }
  result.layer_average = summarize(pooled);
  return result;
}

std::string_view to_string(ProbeKind kind) noexcept { return kind == ProbeKind::cav ? "cav" : "car"; }

std::vector<MetricSeries> size_sweep(const LayerStack& pos, const LayerStack& neg, const SizeSweepOptions& options) {
  if (options.sizes.empty()) throw Error(Errc::invalid_argument, "no sizes requested");
  if (options.kinds.empty()) throw Error(Errc::invalid_argument, "no probe kinds requested");
  const auto layers = resolve_layers(pos, options.layers);
  std::size_t available = std::numeric_limits<std::size_t>::max();
  for (int layer : layers) {
    available = std::min({available, static_cast<std::size_t>(layer_of(pos, layer, "positive").rows()),
                          static_cast<std::size_t>(layer_of(neg, layer, "negative").rows())});
  }

  struct Cell {
    std::size_t size;
    ProbeKind kind;
    std::string warning;
  };
  std::vector<Cell> cells;
  for (auto size : options.sizes) {
    std::string warning;
    auto used = size;
    if (size > available) {
      used = available;
      warning = "requested " + std::to_string(size) + " per class, trimmed to " + std::to_string(available);
    }
    for (auto kind : options.kinds) cells.push_back({used, kind, warning});
  }

  std::vector<std::vector<Summary>> results(cells.size(), std::vector<Summary>(layers.size()));
  parallel_for(cells.size() * layers.size(), [&](std::size_t job) {
    const auto ci = job / layers.size();
    const auto li = job % layers.size();
    const auto& cell = cells[ci];
    const auto& p = layer_of(pos, layers[li], "positive");
    const auto& q = layer_of(neg, layers[li], "negative");
    Rng rng(options.seed + cell.size);
    const auto pi = sample_indices(static_cast<std::size_t>(p.rows()), cell.size, rng);
    const auto qi = sample_indices(static_cast<std::size_t>(q.rows()), cell.size, rng);
    Eigen::MatrixXd x;
    acts::Labels y;
    acts::stack_labeled(take_rows(p, pi), take_rows(q, qi), x, y);
    const auto trainer = cell.kind == ProbeKind::cav ? probes::cav_trainer(options.hp) : probes::car_trainer(options.svm);
    const auto cv = probes::cross_validate(x, y, options.folds, trainer, options.seed);
    results[ci][li] = summarize(cv.fold_accuracies);
  });

  std::vector<MetricSeries> out;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    MetricSeries s;
    s.name = std::string(to_string(cells[ci].kind)) + "_cv_accuracy_n" + std::to_string(cells[ci].size);
    if (!cells[ci].warning.empty()) s.warnings.push_back(cells[ci].warning);
    for (std::size_t li = 0; li < layers.size(); ++li) s.push(layers[li], results[ci][li]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<MetricSeries> ood_transfer(const LayerStack& train_pos, const LayerStack& train_neg,
                                       const LayerStack& test_pos, const LayerStack& test_neg,
                                       const TransferOptions& options) {
  const auto layers = resolve_layers(train_pos, options.layers);
  const auto& a = train_pos.begin()->second.concept_qid;
  const auto& b = layer_of(test_pos, layers.front(), "test positive").concept_qid;
  if (a != b) throw Error(Errc::invalid_argument, "concept mismatch: trained on '" + a + "', tested on '" + b + "'");

  std::vector<std::vector<Summary>> results(options.kinds.size(), std::vector<Summary>(layers.size()));
  parallel_for(layers.size(), [&](std::size_t li) {
    const int layer = layers[li];
    acts::ProbeSetOptions po;
    po.n_per_class = options.n_per_class;
    po.seed = options.seed;
    const auto set =
        acts::make_probe_set(layer_of(train_pos, layer, "positive"), layer_of(train_neg, layer, "negative"), po);
    const std::set<std::string> used(set.train_ids.begin(), set.train_ids.end());
    Rng rng(options.seed + 7);
    auto draw = [&](const ActivationMatrix& m) {
      std::vector<std::size_t> fresh;
      for (std::size_t i = 0; i < m.sample_ids.size(); ++i) {
        if (!used.contains(m.sample_ids[i])) fresh.push_back(i);
      }
      if (fresh.empty()) throw Error(Errc::invalid_argument, "no evaluation rows left after excluding training rows");
      const auto pick = sample_indices(fresh.size(), options.n_per_class, rng);
      std::vector<std::size_t> rows;
      for (auto k : pick) rows.push_back(fresh[k]);
      return take_rows(m, rows);
    };
    const auto eval_pos = draw(layer_of(test_pos, layer, "test positive"));
    const auto eval_neg = draw(layer_of(test_neg, layer, "test negative"));
    Eigen::MatrixXd x;
    acts::Labels y;
    acts::stack_labeled(eval_pos, eval_neg, x, y);
    for (std::size_t ki = 0; ki < options.kinds.size(); ++ki) {
      const auto predicted = options.kinds[ki] == ProbeKind::cav
                                 ? probes::predict(probes::train_cav(set, options.hp), x)
                                 : probes::predict(probes::train_car(set, options.svm), x);
      results[ki][li] = summarize(correctness(predicted, y));
    }
  });
  std::vector<MetricSeries> out;
  for (std::size_t ki = 0; ki < options.kinds.size(); ++ki) {
    MetricSeries s;
    s.name = std::string(to_string(options.kinds[ki])) + "_ood_accuracy";
    for (std::size_t li = 0; li < layers.size(); ++li) s.push(layers[li], results[ki][li]);
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<MetricSeries, MetricSeries> cav_cross_dataset_cosine(const CavStack& a, const CavStack& b, int permutations,
                                                               std::uint64_t seed) {
  if (a.empty()) throw Error(Errc::invalid_argument, "no CAVs");
  if (permutations < 1) throw Error(Errc::invalid_argument, "permutations must be >= 1");
  if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), [](const auto& l, const auto& r) {
        return l.first == r.first;
      })) {
    throw Error(Errc::invalid_argument, "CAV stacks cover different layers");
  }
  MetricSeries cos;
  cos.name = "cross_dataset_cosine";
  MetricSeries base;
  base.name = "permutation_baseline";
  Rng rng(seed);
  for (const auto& [layer, cav_a] : a) {
    const auto& cav_b = b.at(layer);
    cos.push(layer, {probes::cosine(cav_a, cav_b), 0.0, 1});
    std::vector<double> values;
    Eigen::VectorXd permuted = cav_b.w;
    for (int r = 0; r < permutations; ++r) {
      for (Eigen::Index i = permuted.size(); i > 1; --i) {
        const auto j = static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(i)));
        std::swap(permuted(i - 1), permuted(j));
      }
      values.push_back(probes::cosine(cav_a.w, permuted));
    }
    base.push(layer, summarize(values));
    base.band_lo.push_back(*std::min_element(values.begin(), values.end()));
    base.band_hi.push_back(*std::max_element(values.begin(), values.end()));
  }
  return {cos, base};
}

std::vector<std::size_t> capped_rows(std::size_t rows, std::size_t cap, std::uint64_t seed) {
  if (rows <= cap) {
    std::vector<std::size_t> all(rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  Rng rng(seed);
  auto picked = sample_indices(rows, cap, rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

template <typename Probe>
std::vector<MetricSeries> classify_subconcepts(const std::map<int, Probe>& main,
                                               const std::map<std::string, LayerStack>& sub_data,
                                               const SubconceptOptions& options, const std::string& suffix) {
  if (main.empty()) throw Error(Errc::invalid_argument, "no main-concept probes");
  std::vector<MetricSeries> out;
  for (const auto& [key, stack] : sub_data) {
    MetricSeries s;
    s.name = key + suffix;
    for (const auto& [layer, probe] : main) {
      const auto& m = layer_of(stack, layer, key.c_str());
      const auto rows = capped_rows(static_cast<std::size_t>(m.rows()), options.cap, options.seed);
      if (rows.size() < static_cast<std::size_t>(m.rows()) && s.warnings.empty()) {
        s.warnings.push_back("capped " + std::to_string(m.rows()) + " rows to " + std::to_string(rows.size()));
      }
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), m.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = m.data.row(static_cast<Eigen::Index>(rows[r])).template cast<double>();
      }
      const auto labels = probes::predict(probe, x);
      std::vector<double> positive(rows.size());
      for (std::size_t r = 0; r < rows.size(); ++r) positive[r] = labels(static_cast<Eigen::Index>(r)) == 1 ? 1.0 : 0.0;
      s.push(layer, summarize(positive));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<MetricSeries> subconcept_classification(const CarStack& main_car,
                                                    const std::map<std::string, LayerStack>& sub_data,
                                                    const SubconceptOptions& options) {
  return classify_subconcepts(main_car, sub_data, options, "_car_positive_rate");
}

std::vector<MetricSeries> subconcept_classification(const CavStack& main_cav,
                                                    const std::map<std::string, LayerStack>& sub_data,
                                                    const SubconceptOptions& options) {
  return classify_subconcepts(main_cav, sub_data, options, "_cav_positive_rate");
}

}  // namespace cforge::experiments
