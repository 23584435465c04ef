#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "cforge/error.hpp"
#include "cforge/service.hpp"

namespace cforge::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

kg::DisambiguationCandidate candidate_from_json(const json& doc) {
  return {kg::ConceptId::parse(doc.at("qid").get<std::string>()), doc.value("label", std::string{}),
          doc.value("description", std::string{}), doc.value("description_missing", false)};
}

json candidates_json(const std::vector<kg::DisambiguationCandidate>& candidates) {
  json out = json::array();
  for (const auto& c : candidates) out.push_back(kg::to_json(c));
  return out;
}

std::vector<kg::DisambiguationCandidate> candidates_from_json(const json& doc) {
  std::vector<kg::DisambiguationCandidate> out;
  for (const auto& c : doc) out.push_back(candidate_from_json(c));
  return out;
}

kg::ConceptNode node_of(const kg::LabeledConcept& c, int depth) {
  kg::ConceptNode node;
  node.label = c.label;
  node.concept_id = c.concept_id;
  node.depth = depth;
  return node;
}

}  // namespace

json to_json(const Session& s) {
  json history = json::array();
  for (const auto& n : s.history) history.push_back(kg::to_json(n));
  json pending = json::array();
  for (const auto& p : s.pending) {
    json item{{"label", p.label}, {"candidates", candidates_json(p.candidates)}, {"skipped", p.skipped}};
    item["selected"] = p.selected ? json(p.selected->str()) : json(nullptr);
    pending.push_back(std::move(item));
  }
  json replies = json::object();
  for (const auto& [key, r] : s.replies) replies[key] = {{"status", r.status}, {"body", r.body}};
  json doc{{"id", s.id},
           {"query", s.query},
           {"modality", corpus::to_string(s.modality)},
           {"candidates", candidates_json(s.candidates)},
           {"history", history},
           {"pending", pending},
           {"committed", s.committed},
           {"replies", replies},
           {"created_at", s.created_at},
           {"updated_at", s.updated_at}};
  doc["current"] = s.current ? kg::to_json(*s.current) : json(nullptr);
  doc["manifest_path"] = s.manifest_path ? json(*s.manifest_path) : json(nullptr);
  doc["creation_key"] = s.creation_key ? json(*s.creation_key) : json(nullptr);
  return doc;
}

Session session_from_json(const json& doc) {
  Session s;
  try {
    s.id = doc.at("id").get<std::string>();
    s.query = doc.value("query", std::string{});
    s.modality = corpus::parse_modality(doc.value("modality", std::string("image")));
    s.candidates = candidates_from_json(doc.value("candidates", json::array()));
    if (doc.contains("current") && !doc["current"].is_null()) s.current = kg::node_from_json(doc["current"]);
    for (const auto& n : doc.value("history", json::array())) s.history.push_back(kg::node_from_json(n));
    for (const auto& p : doc.value("pending", json::array())) {
      PendingChoice choice;
      choice.label = p.at("label").get<std::string>();
      choice.candidates = candidates_from_json(p.value("candidates", json::array()));
      choice.skipped = p.value("skipped", false);
      if (p.contains("selected") && !p["selected"].is_null()) {
        choice.selected = kg::ConceptId::parse(p["selected"].get<std::string>());
      }
      s.pending.push_back(std::move(choice));
    }
    s.committed = doc.value("committed", false);
    if (doc.contains("manifest_path") && !doc["manifest_path"].is_null()) {
      s.manifest_path = doc["manifest_path"].get<std::string>();
    }
    if (doc.contains("creation_key") && !doc["creation_key"].is_null()) {
      s.creation_key = doc["creation_key"].get<std::string>();
    }
    const auto replies = doc.value("replies", json::object());
    for (const auto& [key, r] : replies.items()) {
      s.replies[key] = {r.at("status").get<int>(), r.at("body")};
    }
    s.created_at = doc.value("created_at", std::string{});
    s.updated_at = doc.value("updated_at", std::string{});
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("session: ") + e.what());
  }
  return s;
}

fs::path pool_path(const fs::path& data_dir, corpus::Modality modality) {
  return data_dir / "pools" / (std::string(corpus::to_string(modality)) + ".json");
}

WikimediaBackend::WikimediaBackend(kg::WikidataClient& wikidata, corpus::CorpusClient& corpus, fs::path data_dir,
                                   bool download_images)
    : wikidata_(wikidata), corpus_(corpus), data_dir_(std::move(data_dir)), download_images_(download_images) {}

std::vector<kg::DisambiguationCandidate> WikimediaBackend::search(const std::string& query) {
  return wikidata_.search(query);
}

kg::ConceptNode WikimediaBackend::resolve(const kg::ConceptId& id) {
  const auto e = wikidata_.entity(id);
  kg::ConceptNode node;
  node.label = e.label;
  node.description = e.description;
  node.concept_id = e.concept_id;
  return node;
}

std::vector<kg::ConceptNode> WikimediaBackend::children(const kg::ConceptId& id) {
  std::vector<kg::ConceptNode> out;
  for (const auto& c : wikidata_.subconcepts(id)) out.push_back(node_of(c, 1));
  return out;
}

std::vector<kg::ConceptNode> WikimediaBackend::parents(const kg::ConceptId& id) {
  std::vector<kg::ConceptNode> out;
  for (const auto& c : wikidata_.superconcepts(id)) out.push_back(node_of(c, 0));
  return out;
}

Preview WikimediaBackend::preview(const kg::ConceptNode& node, corpus::Modality modality, std::size_t limit) {
  if (!node.concept_id) throw Error(Errc::invalid_argument, "preview needs a Wikidata concept");
  Preview p;
  if (modality == corpus::Modality::image) {
    for (const auto& ref : corpus_.commons_image_query(*node.concept_id)) {
      if (p.items.size() >= limit) break;
      p.thumbnails.push_back(corpus::thumbnail_url(ref.title, 320));
      p.items.emplace_back(ref);
    }
  } else {
    corpus::SentenceOptions o;
    o.target = limit;
    o.max_supplement_articles = 0;
    for (auto& s : corpus_.wikipedia_sentences(*node.concept_id, o)) {
      if (p.items.size() >= limit) break;
      p.items.emplace_back(std::move(s));
    }
  }
  p.empty = p.items.empty();
  return p;
}

fs::path WikimediaBackend::build_dataset(const DatasetRequest& req) {
  if (!req.node.concept_id) throw Error(Errc::invalid_argument, "dataset needs a Wikidata concept");
  std::vector<kg::ConceptId> qids{*req.node.concept_id};
  for (const auto& q : req.subconcepts) {
    if (std::find(qids.begin(), qids.end(), q) == qids.end()) qids.push_back(q);
  }
  std::vector<corpus::Sample> positives;
  for (const auto& q : qids) {
    if (req.modality == corpus::Modality::image) {
      for (auto& ref : corpus_.commons_image_query(q)) positives.emplace_back(std::move(ref));
    } else {
      corpus::SentenceOptions o;
      o.target = req.n_pos;
      o.seed = req.seed;
      for (auto& s : corpus_.wikipedia_sentences(q, o)) positives.emplace_back(std::move(s));
    }
  }

  const auto pool_file = pool_path(data_dir_, req.modality);
  if (!fs::exists(pool_file)) {
    throw Error(Errc::not_found, "no negative pool at " + pool_file.string() + "; build one with `cforge fetch --pool`");
  }
  const auto pool = corpus::load_pool(pool_file);
  std::set<std::string> exclude;
  for (const auto& q : qids) exclude.insert(q.str());
  for (const auto& p : positives) exclude.insert(corpus::source_qid(p).str());
  std::vector<corpus::Sample> negatives;
  for (const auto& item : pool.items) {
    if (!exclude.contains(corpus::source_qid(item).str())) negatives.push_back(item);
  }

  auto ds = corpus::assemble_dataset(req.node, req.modality, std::move(positives), std::move(negatives),
                                     {req.n_pos, req.n_neg, req.seed});
  ds.manifest.qids.clear();
  for (const auto& q : qids) ds.manifest.qids.push_back(q.str());
  ds.manifest.query = {{"subconcepts", ds.manifest.qids}, {"pool", pool_file.string()}};

  if (req.modality == corpus::Modality::image && download_images_) {
    const auto dir = corpus::dataset_dir(data_dir_, req.node, req.modality) / "images";
    for (auto* members : {&ds.positives, &ds.negatives}) {
      std::vector<corpus::ImageRef> refs;
      for (const auto& s : *members) refs.push_back(std::get<corpus::ImageRef>(s));
      const auto report = corpus_.download_images(refs, dir);
      for (const auto& f : report.failures) spdlog::warn("download failed for {}: {}", f.title, f.reason);
      for (auto& s : *members) {
        auto& ref = std::get<corpus::ImageRef>(s);
        for (const auto& d : report.downloaded) {
          if (d.title == ref.title) ref.local_path = d.local_path;
        }
      }
    }
  }
  return corpus::save_dataset(ds, data_dir_);
}

}  // namespace cforge::service
