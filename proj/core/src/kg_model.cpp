#include "cforge/kg_model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <deque>
#include <set>
#include <sstream>

#include "cforge/error.hpp"

namespace cforge::kg {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) words.push_back(std::move(w));
  return words;
}

bool is_article(const std::string& word) {
  const auto w = lower(word);
  return w == "a" || w == "an" || w == "the";
}

}  // namespace

bool ConceptId::is_valid(std::string_view text) noexcept {
  if (text.size() < 2 || text.front() != 'Q') return false;
  return std::all_of(text.begin() + 1, text.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

ConceptId ConceptId::parse(std::string_view text) {
  if (!is_valid(text)) {
    throw Error(Errc::invalid_argument, "invalid Wikidata id '" + std::string(text) + "'");
  }
  return ConceptId(std::string(text));
}

std::string SynsetRef::to_string() const {
  std::string sense_str = std::to_string(sense);
  if (sense_str.size() < 2) sense_str.insert(0, "0");
  return lemma + "." + pos + "." + sense_str;
}

SynsetRef SynsetRef::make(std::string lemma, char pos, int sense) {
  if (lemma.empty()) throw Error(Errc::invalid_argument, "synset lemma is empty");
  if (pos != 'n' && pos != 'v' && pos != 'a' && pos != 'r') {
    throw Error(Errc::invalid_argument, std::string("invalid synset pos '") + pos + "'");
  }
  if (sense < 1) throw Error(Errc::invalid_argument, "synset sense must be >= 1");
  return SynsetRef{std::move(lemma), pos, sense};
}

SynsetRef SynsetRef::parse(std::string_view text) {
  // lemma may itself contain dots ("st._john's_wort"), so split from the right.
  const auto last = text.rfind('.');
  if (last == std::string_view::npos || last == 0) {
    throw Error(Errc::invalid_argument, "malformed synset '" + std::string(text) + "'");
  }
  const auto mid = text.rfind('.', last - 1);
  if (mid == std::string_view::npos || last - mid != 2) {
    throw Error(Errc::invalid_argument, "malformed synset '" + std::string(text) + "'");
  }
  int sense = 0;
  const auto digits = text.substr(last + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), sense);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
    throw Error(Errc::invalid_argument, "malformed synset sense in '" + std::string(text) + "'");
  }
  return make(std::string(text.substr(0, mid)), text[mid + 1], sense);
}

std::string ConceptNode::key() const {
  if (concept_id) return concept_id->str();
  if (synset) return "synset:" + synset->lemma + "." + synset->pos + "." + std::to_string(synset->sense);
  return "label:" + label;
}

ConceptGraph::ConceptGraph(ConceptNode root) {
  if (root.depth != 0) throw Error(Errc::invalid_argument, "root node must have depth 0");
  root_key_ = root.key();
  nodes_.emplace(root_key_, std::move(root));
}

const ConceptNode& ConceptGraph::node(const std::string& key) const {
  auto it = nodes_.find(key);
  if (it == nodes_.end()) throw Error(Errc::not_found, "unknown node key '" + key + "'");
  return it->second;
}

std::vector<std::string> ConceptGraph::children(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : edges_) {
    if (e.parent == key && std::find(out.begin(), out.end(), e.child) == out.end()) {
      out.push_back(e.child);
    }
  }
  return out;
}

std::vector<std::string> ConceptGraph::parents(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& e : edges_) {
    if (e.child == key && std::find(out.begin(), out.end(), e.parent) == out.end()) {
      out.push_back(e.parent);
    }
  }
  return out;
}

std::vector<std::string> ConceptGraph::descendants(const std::string& key) const {
  std::vector<std::string> out;
  std::set<std::string> seen{key};
  std::deque<std::string> queue{key};
  while (!queue.empty()) {
    const auto current = queue.front();
    queue.pop_front();
    for (const auto& child : children(current)) {
      if (seen.insert(child).second) {
        out.push_back(child);
        queue.push_back(child);
      }
    }
  }
  return out;
}

bool ConceptGraph::reaches(const std::string& from, const std::string& to) const {
  if (from == to) return true;
  const auto below = descendants(from);
  return std::find(below.begin(), below.end(), to) != below.end();
}

int ConceptGraph::max_depth() const {
  int depth = 0;
  for (const auto& [key, node] : nodes_) depth = std::max(depth, node.depth);
  return depth;
}

void ConceptGraph::validate() const {
  if (!nodes_.contains(root_key_)) throw Error(Errc::parse, "graph root missing from nodes");
  for (const auto& e : edges_) {
    if (!nodes_.contains(e.parent) || !nodes_.contains(e.child)) {
      throw Error(Errc::parse, "edge references unknown node '" + e.parent + "' -> '" + e.child + "'");
    }
    if (e.child == root_key_) throw Error(Errc::parse, "edge points back at root");
  }
  // Kahn's algorithm for acyclicity.
  std::map<std::string, int> indegree;
  for (const auto& [key, node] : nodes_) indegree[key] = 0;
  for (const auto& e : edges_) ++indegree[e.child];
  std::deque<std::string> ready;
  for (const auto& [key, deg] : indegree) {
    if (deg == 0) ready.push_back(key);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const auto key = ready.front();
    ready.pop_front();
    ++visited;
    for (const auto& e : edges_) {
      if (e.parent == key && --indegree[e.child] == 0) ready.push_back(e.child);
    }
  }
  if (visited != nodes_.size()) throw Error(Errc::parse, "graph contains a cycle");
  const auto below = descendants(root_key_);
  if (below.size() + 1 != nodes_.size()) {
    throw Error(Errc::parse, "graph has nodes unreachable from root");
  }
}

nlohmann::json to_json(const ConceptNode& node) {
  nlohmann::json doc{{"key", node.key()},
                     {"label", node.label},
                     {"description", node.description},
                     {"depth", node.depth}};
  if (node.concept_id) doc["qid"] = node.concept_id->str();
  if (node.synset) doc["synset"] = node.synset->to_string();
  return doc;
}

ConceptNode node_from_json(const nlohmann::json& doc) {
  try {
    ConceptNode node;
    node.label = doc.at("label").get<std::string>();
    node.description = doc.value("description", std::string{});
    node.depth = doc.value("depth", 0);
    if (doc.contains("qid") && !doc["qid"].is_null()) {
      node.concept_id = ConceptId::parse(doc["qid"].get<std::string>());
    }
    if (doc.contains("synset") && !doc["synset"].is_null()) {
      node.synset = SynsetRef::parse(doc["synset"].get<std::string>());
    }
    if (node.depth < 0) throw Error(Errc::parse, "negative node depth");
    return node;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("bad concept node: ") + e.what());
  }
}

nlohmann::json to_json(const DisambiguationCandidate& candidate) {
  return {{"qid", candidate.concept_id.str()},
          {"label", candidate.label},
          {"description", candidate.description},
          {"description_missing", candidate.description_missing}};
}

nlohmann::json ConceptGraph::to_json() const {
  auto nodes = nlohmann::json::array();
  for (const auto& [key, node] : nodes_) nodes.push_back(kg::to_json(node));
  auto edges = nlohmann::json::array();
  for (const auto& e : edges_) edges.push_back({e.parent, e.child, e.relation});
  return {{"root", root_key_}, {"nodes", nodes}, {"edges", edges}};
}

ConceptGraph ConceptGraph::from_json(const nlohmann::json& doc) {
  try {
    const auto root_key = doc.at("root").get<std::string>();
    std::map<std::string, ConceptNode> nodes;
    for (const auto& item : doc.at("nodes")) {
      auto node = node_from_json(item);
      const auto key = node.key();
      if (item.contains("key") && item["key"].get<std::string>() != key) {
        throw Error(Errc::parse, "node key '" + item["key"].get<std::string>() +
                                     "' does not match its identity '" + key + "'");
      }
      if (!nodes.emplace(key, std::move(node)).second) {
        throw Error(Errc::parse, "duplicate node key '" + key + "'");
      }
    }
    auto root_it = nodes.find(root_key);
    if (root_it == nodes.end()) throw Error(Errc::parse, "root '" + root_key + "' not among nodes");
    ConceptGraph graph(root_it->second);
    graph.nodes_ = std::move(nodes);
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 3) throw Error(Errc::parse, "edge must be [parent, child, relation]");
      graph.edges_.push_back({e[0].get<std::string>(), e[1].get<std::string>(), e[2].get<std::string>()});
    }
    std::sort(graph.edges_.begin(), graph.edges_.end());
    graph.edges_.erase(std::unique(graph.edges_.begin(), graph.edges_.end()), graph.edges_.end());
    graph.validate();
    return graph;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("bad concept graph document: ") + e.what());
  }
}

ConceptGraph add_subtree(const ConceptGraph& graph, const std::string& parent_key,
                         const std::vector<ConceptNode>& children, const std::string& relation) {
  const auto& parent = graph.node(parent_key);
  ConceptGraph out = graph;
  for (const auto& child : children) {
    if (child.depth != parent.depth + 1) {
      throw Error(Errc::invalid_argument,
                  "child '" + child.label + "' has depth " + std::to_string(child.depth) +
                      ", expected " + std::to_string(parent.depth + 1));
    }
    const auto key = child.key();
    if (out.reaches(key, parent_key)) {
      throw Error(Errc::invalid_argument, "adding '" + key + "' below '" + parent_key + "' creates a cycle");
    }
    auto existing = out.nodes_.find(key);
    if (existing == out.nodes_.end()) {
      out.nodes_.emplace(key, child);
    } else if (existing->second.depth != child.depth) {
      throw Error(Errc::invalid_argument, "node '" + key + "' already present at depth " +
                                              std::to_string(existing->second.depth));
    }
    Edge edge{parent_key, key, relation};
    auto pos = std::lower_bound(out.edges_.begin(), out.edges_.end(), edge);
    if (pos == out.edges_.end() || *pos != edge) out.edges_.insert(pos, std::move(edge));
  }
  return out;
}

ConceptGraph prune_by_counts(const ConceptGraph& graph,
                             const std::map<std::string, std::int64_t>& counts,
                             std::int64_t min_count) {
  std::set<std::string> removed;
  for (const auto& [key, node] : graph.nodes_) {
    if (key == graph.root_key_) continue;
    auto it = counts.find(key);
    if (it == counts.end()) throw Error(Errc::invalid_argument, "no count for node '" + key + "'");
    if (it->second < min_count) {
      removed.insert(key);
      for (auto& below : graph.descendants(key)) removed.insert(std::move(below));
    }
  }
  ConceptGraph out(graph.root());
  for (const auto& [key, node] : graph.nodes_) {
    if (!removed.contains(key)) out.nodes_.emplace(key, node);
  }
  for (const auto& e : graph.edges_) {
    if (!removed.contains(e.parent) && !removed.contains(e.child)) out.edges_.push_back(e);
  }
  return out;
}

std::vector<std::string> clean_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& label : labels) {
    auto words = split_words(label);
    auto first = words.begin();
    while (first != words.end() && is_article(*first)) ++first;
    const auto count = static_cast<std::size_t>(words.end() - first);
    if (count == 0 || count > 3) continue;
    std::string cleaned;
    for (auto it = first; it != words.end(); ++it) {
      if (!cleaned.empty()) cleaned += ' ';
      cleaned += *it;
    }
    if (seen.insert(lower(cleaned)).second) out.push_back(std::move(cleaned));
  }
  return out;
}

GroupPairs group_pairs(const std::vector<ConceptGraph>& graphs) {
  if (graphs.size() < 2) throw Error(Errc::invalid_argument, "group_pairs needs at least two graphs");
  std::map<std::string, std::size_t> owner;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    for (const auto& [key, node] : graphs[g].nodes()) {
      if (!owner.emplace(key, g).second) {
        throw Error(Errc::invalid_argument, "concept '" + key + "' appears in more than one graph");
      }
    }
  }
  auto ordered = [](const std::string& a, const std::string& b, std::string group) {
    return a < b ? ConceptPair{a, b, std::move(group)} : ConceptPair{b, a, std::move(group)};
  };
  GroupPairs pairs;
  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const auto& nodes = graphs[g].nodes();
    for (auto a = nodes.begin(); a != nodes.end(); ++a) {
      for (auto b = std::next(a); b != nodes.end(); ++b) {
        pairs.intra.push_back(ordered(a->first, b->first, graphs[g].root_key()));
      }
    }
    for (std::size_t h = g + 1; h < graphs.size(); ++h) {
      for (const auto& [ka, na] : nodes) {
        for (const auto& [kb, nb] : graphs[h].nodes()) pairs.inter.push_back(ordered(ka, kb, {}));
      }
    }
  }
  return pairs;
}

}  // namespace cforge::kg
