#include "cforge/service.hpp"

#include <algorithm>
#include <random>

#include <spdlog/spdlog.h>

#include "cforge/io.hpp"
#include "cforge/report.hpp"

namespace cforge::service {

namespace fs = std::filesystem;
using nlohmann::json;

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::parse:
      return 400;
    case Errc::not_found:
      return 404;
    case Errc::conflict:
      return 409;
    case Errc::upstream:
      return 502;
    default:
      return 500;
  }
}

ApiResponse error_response(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return {http_status(err->code()), {{"error", {{"code", to_string(err->code())}, {"message", err->what()}}}}, {}};
  }
  return {500, {{"error", {{"code", "internal"}, {"message", e.what()}}}}, {}};
}

namespace {

std::string new_session_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 16; ++i) id.push_back(kHex[rng() % 16]);
  return id;
}

std::string trimmed(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

template <typename T>
T field(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) {
    throw Error(Errc::invalid_argument, std::string("missing field '") + key + "'");
  }
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::invalid_argument, std::string("field '") + key + "' has the wrong type");
  }
}

json nodes_json(const std::vector<kg::ConceptNode>& nodes) {
  json out = json::array();
  for (const auto& n : nodes) out.push_back(kg::to_json(n));
  return out;
}

json session_view(const Session& s) {
  auto doc = to_json(s);
  doc.erase("replies");
  doc.erase("creation_key");
  return doc;
}

json preview_json(const Preview& p) {
  json items = json::array();
  for (std::size_t i = 0; i < p.items.size(); ++i) {
    auto item = corpus::to_json(p.items[i]);
    if (i < p.thumbnails.size()) item["thumbnail"] = p.thumbnails[i];
    items.push_back(std::move(item));
  }
  json doc{{"items", items}, {"empty", p.empty}};
  if (p.empty) doc["warning"] = "no data found for this concept";
  return doc;
}

}  // namespace

Service::Service(Backend& backend, ServiceOptions options) : backend_(backend), options_(std::move(options)) {
  if (options_.data_dir.empty()) throw Error(Errc::invalid_argument, "service needs a data directory");
  if (options_.runs_dir.empty()) options_.runs_dir = options_.data_dir / "runs";
  const auto dir = options_.data_dir / "sessions";
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    try {
      auto e = std::make_shared<Entry>();
      e->session = session_from_json(io::read_json(entry.path()));
      if (e->session.creation_key) creation_keys_[*e->session.creation_key] = e->session.id;
      sessions_[e->session.id] = std::move(e);
    } catch (const Error& err) {
      spdlog::warn("skipping unreadable session {}: {}", entry.path().string(), err.what());
    }
  }
}

std::shared_ptr<Service::Entry> Service::find(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(Errc::not_found, "no session '" + id + "'");
  return it->second;
}

void Service::persist(const Session& session) const {
  io::write_json(options_.data_dir / "sessions" / (session.id + ".json"), to_json(session));
}

template <typename Fn>
ApiResponse Service::mutate(const std::string& id, const std::optional<std::string>& key, Fn&& fn) {
  std::shared_ptr<Entry> entry;
  try {
    entry = find(id);
  } catch (const Error& e) {
    return error_response(e);
  }
  std::lock_guard lock(entry->mu);
  if (key) {
    auto it = entry->session.replies.find(*key);
    if (it != entry->session.replies.end()) return {it->second.status, it->second.body, {}};
  }
  // Work on a copy so a failed transition leaves the session untouched.
  Session next = entry->session;
  ApiResponse response;
  try {
    if (next.committed) throw Error(Errc::conflict, "session '" + id + "' is committed");
    response = fn(next);
  } catch (const std::exception& e) {
    return error_response(e);
  }
  next.updated_at = io::utc_timestamp();
  if (key) next.replies[*key] = {response.status, response.body};
  persist(next);
  entry->session = std::move(next);
  return response;
}

ApiResponse Service::create_session(const json& body, const std::optional<std::string>& key) {
  try {
    if (key) {
      std::shared_ptr<Entry> existing;
      {
        std::lock_guard lock(mu_);
        auto it = creation_keys_.find(*key);
        if (it != creation_keys_.end()) existing = sessions_.at(it->second);
      }
      if (existing) {
        std::lock_guard lock(existing->mu);
        const auto& r = existing->session.replies.at(*key);
        return {r.status, r.body, {}};
      }
    }
    const auto query = trimmed(field<std::string>(body, "query"));
    if (query.empty()) throw Error(Errc::invalid_argument, "query must not be empty");
    auto entry = std::make_shared<Entry>();
    auto& s = entry->session;
    s.id = new_session_id();
    s.query = query;
    if (body.contains("modality")) s.modality = corpus::parse_modality(field<std::string>(body, "modality"));
    s.candidates = backend_.search(query);
    s.created_at = s.updated_at = io::utc_timestamp();
    json candidates = json::array();
    for (const auto& c : s.candidates) candidates.push_back(kg::to_json(c));
    ApiResponse response{201, {{"session_id", s.id}, {"candidates", candidates}}, {}};
    if (key) {
      s.creation_key = *key;
      s.replies[*key] = {response.status, response.body};
    }
    persist(s);
    std::lock_guard lock(mu_);
    if (key) creation_keys_[*key] = s.id;
    sessions_[s.id] = std::move(entry);
    return response;
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

ApiResponse Service::select(const std::string& id, const json& body, const std::optional<std::string>& key) {
  return mutate(id, key, [&](Session& s) {
    const auto qid = kg::ConceptId::parse(field<std::string>(body, "qid"));
    if (body.contains("modality")) s.modality = corpus::parse_modality(field<std::string>(body, "modality"));
    auto node = backend_.resolve(qid);
    const auto preview = backend_.preview(node, s.modality, options_.preview_limit);
    s.pending.clear();
    for (const auto& child : backend_.children(qid)) {
      PendingChoice choice;
      choice.label = child.label;
      choice.candidates.push_back({*child.concept_id, child.label, child.description, child.description.empty()});
      s.pending.push_back(std::move(choice));
    }
    s.current = node;
    s.history.push_back(node);
    json pending = json::array();
    for (const auto& p : s.pending) pending.push_back({{"label", p.label}, {"qid", p.candidates.front().concept_id.str()}});
    return ApiResponse{200, {{"node", kg::to_json(node)}, {"preview", preview_json(preview)}, {"subconcepts", pending}}, {}};
  });
}

ApiResponse Service::navigate(const std::string& id, const json& body, const std::optional<std::string>& key) {
  return mutate(id, key, [&](Session& s) {
    if (!s.current || !s.current->concept_id) throw Error(Errc::invalid_argument, "select a concept first");
    const auto direction = field<std::string>(body, "direction");
    if (direction != "up" && direction != "down") throw Error(Errc::invalid_argument, "direction must be 'up' or 'down'");
    auto neighbors_of = [&](const kg::ConceptId& q) {
      return direction == "down" ? backend_.children(q) : backend_.parents(q);
    };
    auto neighbors = neighbors_of(*s.current->concept_id);
    if (body.contains("target") && !body["target"].is_null()) {
      const auto target = kg::ConceptId::parse(field<std::string>(body, "target"));
      auto it = std::find_if(neighbors.begin(), neighbors.end(),
                             [&](const kg::ConceptNode& n) { return n.concept_id == target; });
      if (it == neighbors.end()) {
        throw Error(Errc::invalid_argument, target.str() + " is not " + (direction == "down" ? "below " : "above ") +
                                                s.current->concept_id->str());
      }
      auto node = *it;
      node.depth = s.current->depth + (direction == "down" ? 1 : -1);
      s.current = node;
      s.history.push_back(node);
      neighbors = neighbors_of(target);
    }
    json out{{"node", kg::to_json(*s.current)}, {"direction", direction}, {"neighbors", nodes_json(neighbors)}};
    out[direction == "down" ? "children" : "parents"] = out["neighbors"];
    return ApiResponse{200, out, {}};
  });
}

ApiResponse Service::commit(const std::string& id, const json& body, const std::optional<std::string>& key) {
  return mutate(id, key, [&](Session& s) {
    if (!s.current) throw Error(Errc::invalid_argument, "select a concept before committing");
    DatasetRequest req;
    req.node = *s.current;
    req.modality = body.contains("modality") ? corpus::parse_modality(field<std::string>(body, "modality")) : s.modality;
    req.n_pos = body.value("n_pos", std::size_t{200});
    req.n_neg = body.value("n_neg", std::size_t{200});
    req.seed = body.value("seed", std::uint64_t{0});
    std::vector<PendingChoice> choices;
    for (const auto& item : body.value("include_subconcepts", json::array())) {
      PendingChoice choice;
      choice.label = item.value("label", std::string{});
      const auto qid = field<std::string>(item, "qid");
      if (qid == "skip") {
        choice.skipped = true;
      } else {
        choice.selected = kg::ConceptId::parse(qid);
        req.subconcepts.push_back(*choice.selected);
      }
      choices.push_back(std::move(choice));
    }
    const auto manifest = backend_.build_dataset(req);
    s.pending = std::move(choices);
    s.modality = req.modality;
    s.committed = true;
    s.manifest_path = manifest.string();
    return ApiResponse{200, {{"dataset_manifest_path", manifest.string()}, {"manifest", io::read_json(manifest)}}, {}};
  });
}

ApiResponse Service::get_session(const std::string& id) {
  try {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    return {200, session_view(entry->session), {}};
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

ApiResponse Service::list_datasets() {
  try {
    json out = json::array();
    if (fs::is_directory(options_.data_dir)) {
      for (const auto& entry : fs::recursive_directory_iterator(options_.data_dir)) {
        if (entry.path().filename() != "manifest.json") continue;
        const auto doc = io::read_json(entry.path());
        if (!doc.contains("concept") || !doc.contains("achieved")) continue;  // not a dataset manifest
        out.push_back({{"path", entry.path().string()},
                       {"concept", doc["concept"]},
                       {"modality", doc.value("modality", std::string{})},
                       {"qids", doc.value("qids", json::array())},
                       {"achieved", doc["achieved"]},
                       {"balance_downgraded", doc.value("balance_downgraded", false)}});
      }
    }
    std::sort(out.begin(), out.end(), [](const json& a, const json& b) { return a["path"] < b["path"]; });
    return {200, {{"datasets", out}}, {}};
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

ApiResponse Service::list_runs() {
  try {
    return {200, {{"runs", experiments::list_runs(options_.runs_dir)}}, {}};
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

ApiResponse Service::run_report(const std::string& run_id) {
  try {
    const auto dir = experiments::run_dir(options_.runs_dir, run_id);
    return {200, json(), io::read_file(dir / "report.json")};
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

}  // namespace cforge::service
