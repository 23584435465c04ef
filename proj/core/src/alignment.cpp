// Group cosine and triplet odd-one-out over KG-grouped concepts.

#include <algorithm>
#include <array>
#include <numeric>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "cforge/error.hpp"
#include "cforge/experiments.hpp"
#include "cforge/random.hpp"

namespace cforge::experiments {

namespace {

// Concepts of all groups in lexicographic key order, so index order equals
// key order and pair (i, j) with i < j is the canonical pair key.
struct Universe {
  std::vector<std::string> keys;
  std::vector<std::size_t> group_of;
  std::vector<std::vector<std::size_t>> members;  // per group, ascending
  std::vector<int> layers;
};

Universe build_universe(const std::vector<kg::ConceptGraph>& graphs, const ConceptCavs& cavs, std::vector<int> layers) {
  if (graphs.size() < 2) throw Error(Errc::invalid_argument, "need at least two concept groups");
  std::vector<std::pair<std::string, std::size_t>> all;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    for (const auto& [key, node] : graphs[g].nodes()) all.emplace_back(key, g);
  }
  std::sort(all.begin(), all.end());
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (all[i].first == all[i - 1].first) {
      throw Error(Errc::invalid_argument, "concept '" + all[i].first + "' appears in more than one group");
    }
  }
  Universe u;
  u.members.resize(graphs.size());
  for (const auto& [key, g] : all) {
    auto it = cavs.find(key);
    if (it == cavs.end() || it->second.empty()) throw Error(Errc::not_found, "missing CAVs for concept '" + key + "'");
    u.members[g].push_back(u.keys.size());
    u.keys.push_back(key);
    u.group_of.push_back(g);
  }
  if (layers.empty()) {
    for (const auto& [layer, cav] : cavs.at(u.keys.front())) layers.push_back(layer);
  }
  for (const auto& key : u.keys) {
    const auto& stack = cavs.at(key);
    for (int layer : layers) {
      if (!stack.contains(layer)) {
        throw Error(Errc::not_found, "missing CAV for concept '" + key + "' at layer " + std::to_string(layer));
      }
    }
  }
  u.layers = std::move(layers);
  return u;
}

Eigen::MatrixXd cosine_matrix(const Universe& u, const ConceptCavs& cavs, int layer) {
  const auto n = static_cast<Eigen::Index>(u.keys.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& wi = cavs.at(u.keys[static_cast<std::size_t>(i)]).at(layer);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      c(i, j) = c(j, i) = probes::cosine(wi, cavs.at(u.keys[static_cast<std::size_t>(j)]).at(layer));
    }
  }
  return c;
}

// Per-layer values for each group row (intra per group, then non-related),
// averaged over layers.
GroupTable average_rows(const std::vector<kg::ConceptGraph>& graphs, const Universe& u,
                        const std::vector<std::vector<std::vector<double>>>& per_layer) {
  GroupTable table;
  table.layers = u.layers;
  const auto n_rows = graphs.size() + 1;
  for (std::size_t r = 0; r < n_rows; ++r) {
    if (per_layer.front()[r].empty()) continue;  // groups with a single member have no intra pairs
    GroupRow row;
    if (r < graphs.size()) {
      row.group = graphs[r].root_key();
      row.label = graphs[r].root().label;
    } else {
      row.group = std::string(kNonRelated);
      row.label = std::string(kNonRelated);
    }
    row.pairs = per_layer.front()[r].size();
    for (const auto& layer_rows : per_layer) {
      const auto s = summarize(layer_rows[r]);
      row.mean += s.mean;
      row.sem += s.sem;
    }
    row.mean /= static_cast<double>(per_layer.size());
    row.sem /= static_cast<double>(per_layer.size());
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::uint64_t choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

}  // namespace

nlohmann::json to_json(const GroupTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"group", r.group}, {"label", r.label}, {"mean", r.mean}, {"sem", r.sem}, {"pairs", r.pairs}});
  }
  nlohmann::json doc{{"rows", rows}, {"layers", table.layers}};
  if (table.triplets > 0) {
    doc["triplets"] = table.triplets;
    doc["exhaustive"] = table.exhaustive;
    doc["ties"] = table.ties;
    doc["tie_examples"] = table.tie_examples;
  }
  return doc;
}

GroupTable group_cosine(const std::vector<kg::ConceptGraph>& graphs, const ConceptCavs& cavs, std::vector<int> layers) {
  const auto u = build_universe(graphs, cavs, std::move(layers));
  const auto n = u.keys.size();
  std::vector<std::vector<std::vector<double>>> per_layer;
  for (int layer : u.layers) {
    const auto c = cosine_matrix(u, cavs, layer);
    std::vector<std::vector<double>> rows(graphs.size() + 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto gi = u.group_of[i];
        const auto r = gi == u.group_of[j] ? gi : graphs.size();
        rows[r].push_back(c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    }
    per_layer.push_back(std::move(rows));
  }
  return average_rows(graphs, u, per_layer);
}

std::size_t count_triplets(const std::vector<std::size_t>& group_sizes) {
  const auto total = std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
  std::size_t count = 0;
  for (auto s : group_sizes) count += choose2(s) * (total - s);
  return count;
}

GroupTable triplet_experiment(const std::vector<kg::ConceptGraph>& graphs, const ConceptCavs& cavs,
                              const TripletOptions& options) {
  const auto u = build_universe(graphs, cavs, options.layers);
  const auto n = u.keys.size();
  std::vector<std::size_t> sizes;
  for (const auto& m : u.members) sizes.push_back(m.size());
  const auto total = count_triplets(sizes);
  if (total == 0) throw Error(Errc::invalid_argument, "no group has two members; no valid triplets");

  std::vector<std::vector<std::size_t>> outsiders(u.members.size());
  for (std::size_t g = 0; g < u.members.size(); ++g) {
    for (std::size_t i = 0; i < n; ++i) {
      if (u.group_of[i] != g) outsiders[g].push_back(i);
    }
  }

  // Triplet index -> (a, b, c): groups in order, then the intra pair, then the
  // outsider.
  auto unrank = [&](std::size_t idx) {
    for (std::size_t g = 0; g < u.members.size(); ++g) {
      const auto& m = u.members[g];
      const auto block = choose2(m.size()) * outsiders[g].size();
      if (idx >= block) {
        idx -= block;
        continue;
      }
      auto pair_idx = idx / outsiders[g].size();
      const auto third = outsiders[g][idx % outsiders[g].size()];
      for (std::size_t a = 0; a < m.size(); ++a) {
        const auto span = m.size() - 1 - a;
        if (pair_idx < span) return std::array<std::size_t, 3>{m[a], m[a + 1 + pair_idx], third};
        pair_idx -= span;
      }
    }
    throw Error(Errc::invalid_argument, "triplet index out of range");
  };

  std::vector<std::size_t> chosen;
  if (total <= options.exhaustive_limit) {
    chosen.resize(total);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  } else {
    // Floyd's sampling without replacement.
    const auto k = std::min(options.n_triplets, total);
    Rng rng(options.seed);
    std::unordered_set<std::size_t> picked;
    picked.reserve(k * 2);
    for (std::size_t j = total - k; j < total; ++j) {
      const auto t = static_cast<std::size_t>(uniform_below(rng, j + 1));
      if (!picked.insert(t).second) picked.insert(j);
    }
    chosen.assign(picked.begin(), picked.end());
    std::sort(chosen.begin(), chosen.end());
  }
  const bool exhaustive = chosen.size() == total;

  std::vector<std::array<std::size_t, 3>> triplets;
  triplets.reserve(chosen.size());
  for (auto idx : chosen) {
    auto t = unrank(idx);
    std::sort(t.begin(), t.end());
    triplets.push_back(t);
  }

  std::size_t ties = 0;
  std::vector<std::string> tie_examples;
  std::vector<std::vector<std::vector<double>>> per_layer;
  for (int layer : u.layers) {
    const auto c = cosine_matrix(u, cavs, layer);
    std::vector<std::uint32_t> wins(n * n, 0);
    std::vector<std::uint32_t> seen(n * n, 0);
    for (const auto& [a, b, x] : triplets) {
      // Candidate pairs in lexicographic order; the first strict maximum wins.
      const std::array<std::pair<std::size_t, std::size_t>, 3> pairs{{{a, b}, {a, x}, {b, x}}};
      std::size_t best = 0;
      double best_value = c(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      bool tied = false;
      for (std::size_t p = 0; p < 3; ++p) {
        const auto [i, j] = pairs[p];
        ++seen[i * n + j];
        if (p == 0) continue;
        const double v = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (v > best_value) {
          best = p;
          best_value = v;
          tied = false;
        } else if (v == best_value) {
          tied = true;
        }
      }
      ++wins[pairs[best].first * n + pairs[best].second];
      if (tied) {
        ++ties;
        if (tie_examples.size() < 5) {
          tie_examples.push_back("layer " + std::to_string(layer) + ": " + u.keys[a] + ", " + u.keys[b] + ", " +
                                 u.keys[x]);
        }
      }
    }
    std::vector<std::vector<double>> rows(graphs.size() + 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto s = seen[i * n + j];
        if (s == 0) continue;
        const auto r = u.group_of[i] == u.group_of[j] ? u.group_of[i] : graphs.size();
        rows[r].push_back(static_cast<double>(wins[i * n + j]) / s);
      }
    }
    per_layer.push_back(std::move(rows));
  }
  if (ties > 0) spdlog::info("triplet experiment: {} tied triplet decisions broken lexicographically", ties);

  auto table = average_rows(graphs, u, per_layer);
  table.triplets = triplets.size();
  table.exhaustive = exhaustive;
  table.ties = ties;
  table.tie_examples = std::move(tie_examples);
  return table;
}

}  // namespace cforge::experiments
