#include "cforge/wikidata.hpp"

#include <set>

#include "cforge/error.hpp"

namespace cforge::kg {

namespace {

constexpr std::string_view kEntityPrefix = "http://www.wikidata.org/entity/";

nlohmann::json parse_json(std::string_view body, const char* what) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::upstream, std::string("malformed ") + what + " response: " + e.what());
  }
}

std::string label_service() {
  return R"( SERVICE wikibase:label { bd:serviceParam wikibase:language "en". } })";
}

}  // namespace

std::string subconcept_query(const ConceptId& id) {
  return "SELECT DISTINCT ?item ?itemLabel WHERE { ?item wdt:P31|wdt:P279 wd:" + id.str() + " ." +
         label_service();
}

std::string superconcept_query(const ConceptId& id) {
  return "SELECT DISTINCT ?item ?itemLabel WHERE { wd:" + id.str() + " wdt:P31|wdt:P279 ?item ." +
         label_service();
}

std::vector<DisambiguationCandidate> parse_search_response(std::string_view body) {
  const auto doc = parse_json(body, "wbsearchentities");
  if (doc.contains("error")) {
    throw Error(Errc::upstream, "wbsearchentities error: " + doc["error"].value("info", std::string("unknown")));
  }
  if (!doc.contains("search") || !doc["search"].is_array()) {
    throw Error(Errc::upstream, "wbsearchentities response lacks 'search' array");
  }
  std::vector<DisambiguationCandidate> out;
  for (const auto& hit : doc["search"]) {
    const auto id = hit.value("id", std::string{});
    if (!ConceptId::is_valid(id)) continue;
    DisambiguationCandidate c{ConceptId::parse(id), hit.value("label", id), hit.value("description", std::string{})};
    c.description_missing = c.description.empty();
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<LabeledConcept> parse_item_bindings(std::string_view body, std::string_view var) {
  const auto doc = parse_json(body, "SPARQL");
  std::vector<LabeledConcept> out;
  std::set<std::string> seen;
  try {
    const auto label_var = std::string(var) + "Label";
    for (const auto& row : doc.at("results").at("bindings")) {
      if (!row.contains(std::string(var))) continue;
      const auto uri = row.at(std::string(var)).at("value").get<std::string>();
      if (uri.rfind(kEntityPrefix, 0) != 0) continue;
      const auto qid = uri.substr(kEntityPrefix.size());
      if (!ConceptId::is_valid(qid) || !seen.insert(qid).second) continue;
      auto label = row.contains(label_var) ? row[label_var].at("value").get<std::string>() : qid;
      out.push_back({ConceptId::parse(qid), std::move(label)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::upstream, std::string("malformed SPARQL bindings: ") + e.what());
  }
  return out;
}

WikidataClient::WikidataClient(net::HttpClient& http, std::string sparql_endpoint)
    : http_(http), sparql_endpoint_(std::move(sparql_endpoint)) {}

std::vector<DisambiguationCandidate> WikidataClient::search(std::string_view label, int limit) {
  if (label.find_first_not_of(" \t\n") == std::string_view::npos) {
    throw Error(Errc::invalid_argument, "search label is empty");
  }
  if (limit < 1) throw Error(Errc::invalid_argument, "search limit must be >= 1");
  const auto url = net::build_url(kWikidataApi, {{"action", "wbsearchentities"},
                                                 {"search", std::string(label)},
                                                 {"language", "en"},
                                                 {"uselang", "en"},
                                                 {"type", "item"},
                                                 {"limit", std::to_string(limit)},
                                                 {"format", "json"}});
  return parse_search_response(http_.get(url));
}

nlohmann::json WikidataClient::sparql(const std::string& query) {
  const auto url = net::build_url(sparql_endpoint_, {{"query", query}, {"format", "json"}});
  return parse_json(http_.get(url), "SPARQL");
}

std::vector<LabeledConcept> WikidataClient::subconcepts(const ConceptId& id) {
  const auto url = net::build_url(sparql_endpoint_, {{"query", subconcept_query(id)}, {"format", "json"}});
  return parse_item_bindings(http_.get(url));
}

std::vector<LabeledConcept> WikidataClient::superconcepts(const ConceptId& id) {
  const auto url = net::build_url(sparql_endpoint_, {{"query", superconcept_query(id)}, {"format", "json"}});
  return parse_item_bindings(http_.get(url));
}

EntitySummary WikidataClient::entity(const ConceptId& id) {
  const auto url = net::build_url(kWikidataApi, {{"action", "wbgetentities"},
                                                 {"ids", id.str()},
                                                 {"props", "labels|descriptions|sitelinks"},
                                                 {"languages", "en"},
                                                 {"sitefilter", "enwiki"},
                                                 {"format", "json"}});
  const auto doc = parse_json(http_.get(url), "wbgetentities");
  if (!doc.contains("entities") || !doc["entities"].contains(id.str())) {
    throw Error(Errc::not_found, "entity " + id.str() + " not returned by wbgetentities");
  }
  const auto& e = doc["entities"][id.str()];
  if (e.contains("missing")) throw Error(Errc::not_found, "entity " + id.str() + " does not exist");
  EntitySummary summary{id, id.str(), {}, std::nullopt};
  if (e.contains("labels") && e["labels"].contains("en")) summary.label = e["labels"]["en"].value("value", id.str());
  if (e.contains("descriptions") && e["descriptions"].contains("en")) {
    summary.description = e["descriptions"]["en"].value("value", std::string{});
  }
  if (e.contains("sitelinks") && e["sitelinks"].contains("enwiki")) {
    summary.enwiki_title = e["sitelinks"]["enwiki"].value("title", std::string{});
  }
  return summary;
}

ConceptGraph wikidata_graph(WikidataClient& client, const ConceptId& root, int depth) {
  if (depth < 0) throw Error(Errc::invalid_argument, "depth must be >= 0");
  const auto summary = client.entity(root);
  ConceptNode root_node;
  root_node.label = summary.label;
  root_node.description = summary.description;
  root_node.concept_id = root;
  ConceptGraph graph(root_node);
  std::vector<ConceptId> frontier{root};
  for (int level = 1; level <= depth && !frontier.empty(); ++level) {
    std::vector<ConceptId> next;
    for (const auto& parent : frontier) {
      std::vector<ConceptNode> children;
      for (const auto& c : client.subconcepts(parent)) {
        ConceptNode node;
        node.label = c.label;
        node.concept_id = c.concept_id;
        node.depth = level;
        const bool fresh = !graph.contains(node.key());
        // Nodes already placed at another depth keep their first position.
        if (!fresh && graph.node(node.key()).depth != level) continue;
        if (fresh) next.push_back(c.concept_id);
        children.push_back(std::move(node));
      }
      graph = add_subtree(graph, parent.str(), children, "subclass_of");
    }
    frontier = std::move(next);
  }
  return graph;
}

}  // namespace cforge::kg
