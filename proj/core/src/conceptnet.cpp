#include <algorithm>
#include <cctype>

#include "cforge/error.hpp"
#include "cforge/wikidata.hpp"

namespace cforge::kg {

namespace {

bool is_node_of(std::string_view id, std::string_view slug) {
  const std::string prefix = "/c/en/" + std::string(slug);
  if (id.rfind(prefix, 0) != 0) return false;
  return id.size() == prefix.size() || id[prefix.size()] == '/';
}

}  // namespace

std::string conceptnet_slug(std::string_view term) {
  std::string slug;
  for (unsigned char c : term) {
    slug.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(c)));
  }
  return slug;
}

std::vector<RelatedTerm> parse_conceptnet_edges(std::string_view body, std::string_view term,
                                                const std::vector<std::string>& relations) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::upstream, std::string("malformed ConceptNet response: ") + e.what());
  }
  if (!doc.contains("edges") || !doc["edges"].is_array()) {
    throw Error(Errc::upstream, "ConceptNet response lacks 'edges'");
  }
  const auto slug = conceptnet_slug(term);
  std::vector<RelatedTerm> out;
  for (const auto& rel : relations) {
    std::vector<std::string> labels;
    for (const auto& edge : doc["edges"]) {
      if (!edge.contains("rel") || edge["rel"].value("label", std::string{}) != rel) continue;
      const auto& start = edge.at("start");
      const auto& end = edge.at("end");
      if (start.value("language", std::string{}) != "en" || end.value("language", std::string{}) != "en") continue;
      const auto start_id = start.value("@id", std::string{});
      const auto end_id = end.value("@id", std::string{});
      if (is_node_of(start_id, slug)) {
        labels.push_back(end.value("label", std::string{}));
      } else if (is_node_of(end_id, slug)) {
        labels.push_back(start.value("label", std::string{}));
      }
    }
    for (auto& label : clean_labels(labels)) {
      if (conceptnet_slug(label) == slug) continue;  // self loops
      out.push_back({rel, std::move(label)});
    }
  }
  return out;
}

ConceptNetClient::ConceptNetClient(net::HttpClient& http, std::string base) : http_(http), base_(std::move(base)) {}

std::string ConceptNetClient::query_url(std::string_view term, std::string_view relation) const {
  return net::build_url(base_ + "/query", {{"node", "/c/en/" + conceptnet_slug(term)},
                                           {"rel", "/r/" + std::string(relation)},
                                           {"limit", "1000"}});
}

std::vector<RelatedTerm> ConceptNetClient::related(std::string_view term, const std::vector<std::string>& relations) {
  if (term.find_first_not_of(" \t\n") == std::string_view::npos) {
    throw Error(Errc::invalid_argument, "ConceptNet term is empty");
  }
  std::vector<RelatedTerm> out;
  for (const auto& rel : relations) {
    auto part = parse_conceptnet_edges(http_.get(query_url(term, rel)), term, {rel});
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace cforge::kg
