#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cforge::kg {

/// Wikidata item identifier, e.g. "Q89". Always regex-valid (`Q[0-9]+`).
class ConceptId {
 public:
  /// Throws Error(invalid_argument) unless `text` matches `Q[0-9]+`.
  static ConceptId parse(std::string_view text);
  static bool is_valid(std::string_view text) noexcept;

  const std::string& str() const noexcept { return qid_; }

  friend auto operator<=>(const ConceptId&, const ConceptId&) = default;

 private:
  explicit ConceptId(std::string qid) : qid_(std::move(qid)) {}
  std::string qid_;
};

/// WordNet sense reference such as sport.n.01.
struct SynsetRef {
  std::string lemma;
  char pos = 'n';
  int sense = 1;

  /// "lemma.pos.NN" with a zero-padded two digit sense.
  std::string to_string() const;
  static SynsetRef parse(std::string_view text);
  static SynsetRef make(std::string lemma, char pos, int sense);

  friend bool operator==(const SynsetRef&, const SynsetRef&) = default;
};

struct ConceptNode {
  std::string label;
  std::optional<ConceptId> concept_id;
  std::optional<SynsetRef> synset;
  std::string description;
  int depth = 0;

  /// QID when present, else "synset:<lemma>.<pos>.<sense>", else "label:<label>".
  std::string key() const;

  friend bool operator==(const ConceptNode&, const ConceptNode&) = default;
};

struct Edge {
  std::string parent;
  std::string child;
  std::string relation;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Rooted, acyclic concept hierarchy. Values are immutable from the outside;
/// the free functions below return modified copies.
class ConceptGraph {
 public:
  explicit ConceptGraph(ConceptNode root);

  const std::string& root_key() const noexcept { return root_key_; }
  const ConceptNode& root() const { return nodes_.at(root_key_); }
  const std::map<std::string, ConceptNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  bool contains(const std::string& key) const { return nodes_.contains(key); }
  const ConceptNode& node(const std::string& key) const;
  std::vector<std::string> children(const std::string& key) const;
  std::vector<std::string> parents(const std::string& key) const;
  /// Every node reachable from `key`, excluding `key` itself.
  std::vector<std::string> descendants(const std::string& key) const;
  int max_depth() const;

  nlohmann::json to_json() const;
  static ConceptGraph from_json(const nlohmann::json& doc);

  friend bool operator==(const ConceptGraph&, const ConceptGraph&) = default;

 private:
  friend ConceptGraph add_subtree(const ConceptGraph&, const std::string&,
                                  const std::vector<ConceptNode>&, const std::string&);
  friend ConceptGraph prune_by_counts(const ConceptGraph&,
                                      const std::map<std::string, std::int64_t>&, std::int64_t);

  bool reaches(const std::string& from, const std::string& to) const;
  void validate() const;

  std::string root_key_;
  std::map<std::string, ConceptNode> nodes_;
  std::vector<Edge> edges_;  // kept sorted and unique
};

/// Adds `children` below `parent_key`. Children already present are merged
/// (only the edge is added). Throws on unknown parent, a depth that is not
/// parent depth + 1, or an edge that would close a cycle.
ConceptGraph add_subtree(const ConceptGraph& graph, const std::string& parent_key,
                         const std::vector<ConceptNode>& children, const std::string& relation);

/// Drops nodes whose count is below `min_count`, together with everything
/// below them. The root is always kept and needs no count.
ConceptGraph prune_by_counts(const ConceptGraph& graph,
                             const std::map<std::string, std::int64_t>& counts,
                             std::int64_t min_count = 50);

/// Label cleanup for ConceptNet-style related terms: leading articles removed,
/// entries longer than three words dropped, case-folded duplicates dropped.
std::vector<std::string> clean_labels(const std::vector<std::string>& labels);

struct ConceptPair {
  std::string first;   // lexicographically smaller key
  std::string second;
  std::string group;   // root key of the shared graph; empty for inter-group pairs

  friend bool operator==(const ConceptPair&, const ConceptPair&) = default;
};

struct GroupPairs {
  std::vector<ConceptPair> intra;
  std::vector<ConceptPair> inter;
};

/// All unordered node pairs within each graph (intra) and across graphs (inter).
GroupPairs group_pairs(const std::vector<ConceptGraph>& graphs);

struct DisambiguationCandidate {
  ConceptId concept_id;
  std::string label;
  std::string description;
  bool description_missing = false;
};

nlohmann::json to_json(const ConceptNode& node);
ConceptNode node_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const DisambiguationCandidate& candidate);

}  // namespace cforge::kg
