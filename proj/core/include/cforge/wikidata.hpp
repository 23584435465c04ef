#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cforge/http.hpp"
#include "cforge/kg_model.hpp"

namespace cforge::kg {

struct LabeledConcept {
  ConceptId concept_id;
  std::string label;

  friend bool operator==(const LabeledConcept&, const LabeledConcept&) = default;
};

struct EntitySummary {
  ConceptId concept_id;
  std::string label;
  std::string description;
  std::optional<std::string> enwiki_title;
};

inline constexpr std::string_view kWikidataApi = "https://www.wikidata.org/w/api.php";
inline constexpr std::string_view kWikidataSparql = "https://query.wikidata.org/sparql";

/// SPARQL listing items that are one P31/P279 hop below `id`.
std::string subconcept_query(const ConceptId& id);
/// SPARQL listing the direct P31/P279 targets of `id`.
std::string superconcept_query(const ConceptId& id);

std::vector<DisambiguationCandidate> parse_search_response(std::string_view body);
/// Extracts `?item`/`?itemLabel` bindings; rows are deduplicated by QID in
/// first-seen order. Non-item URIs are skipped.
std::vector<LabeledConcept> parse_item_bindings(std::string_view body, std::string_view var = "item");

class WikidataClient {
 public:
  explicit WikidataClient(net::HttpClient& http, std::string sparql_endpoint = std::string(kWikidataSparql));

  /// `wbsearchentities` candidates in API rank order. Throws on empty label.
  std::vector<DisambiguationCandidate> search(std::string_view label, int limit = 10);
  std::vector<LabeledConcept> subconcepts(const ConceptId& id);
  std::vector<LabeledConcept> superconcepts(const ConceptId& id);
  EntitySummary entity(const ConceptId& id);

  /// Raw SPARQL GET returning the JSON result document.
  nlohmann::json sparql(const std::string& query);

 private:
  net::HttpClient& http_;
  std::string sparql_endpoint_;
};

/// Sub-concept hierarchy below `root` down to `depth` P31/P279 hops.
ConceptGraph wikidata_graph(WikidataClient& client, const ConceptId& root, int depth = 2);

/// ConceptNet relations used for concept expansion.
inline const std::vector<std::string>& default_conceptnet_relations() {
  static const std::vector<std::string> rels{"IsA", "MadeOf", "HasA", "HasProperty", "PartOf"};
  return rels;
}

struct RelatedTerm {
  std::string relation;
  std::string term;

  friend bool operator==(const RelatedTerm&, const RelatedTerm&) = default;
};

inline constexpr std::string_view kConceptNetApi = "https://api.conceptnet.io";

/// English-only edges touching `/c/en/<term>` whose relation is in
/// `relations`; the other endpoint's label is cleaned with clean_labels per
/// relation.
std::vector<RelatedTerm> parse_conceptnet_edges(std::string_view body, std::string_view term,
                                                const std::vector<std::string>& relations);

class ConceptNetClient {
 public:
  explicit ConceptNetClient(net::HttpClient& http, std::string base = std::string(kConceptNetApi));

  std::string query_url(std::string_view term, std::string_view relation) const;
  std::vector<RelatedTerm> related(std::string_view term,
                                   const std::vector<std::string>& relations = default_conceptnet_relations());

 private:
  net::HttpClient& http_;
  std::string base_;
};

/// "tow truck" -> "tow_truck", the ConceptNet node naming.
std::string conceptnet_slug(std::string_view term);

}  // namespace cforge::kg
