#include "cforge/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "cforge/error.hpp"
#include "cforge/io.hpp"
#include "cforge/random.hpp"

namespace cforge::corpus {

namespace fs = std::filesystem;

std::string_view to_string(Modality m) noexcept { return m == Modality::image ? "image" : "text"; }

Modality parse_modality(std::string_view text) {
  if (text == "image" || text == "images") return Modality::image;
  if (text == "text" || text == "sentences") return Modality::text;
  throw Error(Errc::invalid_argument, "unknown modality '" + std::string(text) + "'");
}

std::string identity(const Sample& sample) {
  return std::visit(
      [](const auto& s) -> std::string {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, ImageRef>) {
          return s.title;
        } else {
          return s.text;
        }
      },
      sample);
}

const kg::ConceptId& source_qid(const Sample& sample) {
  return std::visit([](const auto& s) -> const kg::ConceptId& { return s.source_qid; }, sample);
}

nlohmann::json to_json(const Sample& sample) {
  if (const auto* img = std::get_if<ImageRef>(&sample)) {
    nlohmann::json doc{{"type", "image"}, {"title", img->title}, {"source_qid", img->source_qid.str()}, {"url", img->url}};
    if (img->local_path) doc["local_path"] = img->local_path->string();
    return doc;
  }
  const auto& s = std::get<SentenceSample>(sample);
  return {{"type", "text"}, {"text", s.text}, {"source_article", s.source_article}, {"source_qid", s.source_qid.str()}};
}

Sample sample_from_json(const nlohmann::json& doc) {
  try {
    const auto qid = kg::ConceptId::parse(doc.at("source_qid").get<std::string>());
    const auto type = doc.value("type", doc.contains("title") ? std::string("image") : std::string("text"));
    if (type == "image") {
      ImageRef ref{doc.at("title").get<std::string>(), qid, doc.value("url", std::string{}), std::nullopt};
      if (doc.contains("local_path")) ref.local_path = fs::path(doc["local_path"].get<std::string>());
      return ref;
    }
    SentenceSample s{doc.at("text").get<std::string>(), doc.value("source_article", std::string{}), qid};
    const auto len = char_length(s.text);
    if (len < kMinSentenceChars || len > kMaxSentenceChars) {
      throw Error(Errc::parse, "sentence of " + std::to_string(len) + " characters violates the length bounds");
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("bad sample: ") + e.what());
  }
}

namespace {

std::vector<Sample> dedup(std::vector<Sample> items) {
  std::vector<Sample> out;
  std::set<std::string> seen;
  for (auto& s : items) {
    if (seen.insert(identity(s)).second) out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> draw(const std::vector<Sample>& pool, std::size_t k, Rng& rng) {
  std::vector<Sample> out;
  out.reserve(k);
  for (auto i : sample_indices(pool.size(), k, rng)) out.push_back(pool[i]);
  return out;
}

nlohmann::json manifest_json(const Manifest& m) {
  return {{"concept", m.concept_key},
          {"qids", m.qids},
          {"modality", to_string(m.modality)},
          {"seed", m.seed},
          {"requested", {{"positives", m.requested_pos}, {"negatives", m.requested_neg}}},
          {"achieved", {{"positives", m.achieved_pos}, {"negatives", m.achieved_neg}}},
          {"candidates", {{"positives", m.candidate_pos}, {"negatives", m.candidate_neg}}},
          {"balance_downgraded", m.balance_downgraded},
          {"query", m.query},
          {"created_at", m.created_at}};
}

Manifest manifest_from_json(const nlohmann::json& doc) {
  Manifest m;
  m.concept_key = doc.at("concept").get<std::string>();
  m.qids = doc.at("qids").get<std::vector<std::string>>();
  m.modality = parse_modality(doc.at("modality").get<std::string>());
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.requested_pos = doc.at("requested").at("positives").get<std::size_t>();
  m.requested_neg = doc.at("requested").at("negatives").get<std::size_t>();
  m.achieved_pos = doc.at("achieved").at("positives").get<std::size_t>();
  m.achieved_neg = doc.at("achieved").at("negatives").get<std::size_t>();
  m.candidate_pos = doc.at("candidates").at("positives").get<std::size_t>();
  m.candidate_neg = doc.at("candidates").at("negatives").get<std::size_t>();
  m.balance_downgraded = doc.at("balance_downgraded").get<bool>();
  m.query = doc.value("query", nlohmann::json::object());
  m.created_at = doc.value("created_at", std::string{});
  return m;
}

std::string safe_filename(std::string_view title) {
  auto name = std::string(title.rfind("File:", 0) == 0 ? title.substr(5) : title);
  for (auto& c : name) {
    if (c == '/' || c == '\\' || c == ' ' || c == ':' || c == '"' || c == '?' || c == '*') c = '_';
  }
  return name;
}

std::string title_from_file_url(std::string_view url) {
  constexpr std::string_view marker = "Special:FilePath/";
  const auto pos = url.find(marker);
  auto name = net::url_decode(pos == std::string_view::npos ? url.substr(url.rfind('/') + 1)
                                                            : url.substr(pos + marker.size()));
  std::replace(name.begin(), name.end(), '_', ' ');
  return "File:" + name;
}

std::string title_from_article_url(std::string_view url) {
  const auto pos = url.find("/wiki/");
  auto name = net::url_decode(pos == std::string_view::npos ? url : url.substr(pos + 6));
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

const std::string kEntityPrefix = "http://www.wikidata.org/entity/";

std::optional<kg::ConceptId> qid_from_uri(const std::string& uri) {
  if (uri.rfind(kEntityPrefix, 0) != 0) return std::nullopt;
  const auto qid = uri.substr(kEntityPrefix.size());
  if (!kg::ConceptId::is_valid(qid)) return std::nullopt;
  return kg::ConceptId::parse(qid);
}

nlohmann::json parse_body(std::string_view body, const char* what) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::upstream, std::string("malformed ") + what + " response: " + e.what());
  }
}

}  // namespace

ConceptDataset assemble_dataset(const kg::ConceptNode& node, Modality modality, std::vector<Sample> positives,
                                std::vector<Sample> negatives, const AssembleOptions& options) {
  if (options.n_pos == 0 && options.n_neg == 0) {
    throw Error(Errc::invalid_argument, "dataset request with zero positives and zero negatives");
  }
  positives = dedup(std::move(positives));
  if (positives.empty()) throw Error(Errc::invalid_argument, "no positive samples for '" + node.key() + "'");
  std::set<std::string> positive_ids;
  for (const auto& p : positives) positive_ids.insert(identity(p));
  negatives = dedup(std::move(negatives));
  std::erase_if(negatives, [&](const Sample& s) { return positive_ids.contains(identity(s)); });
  if (options.n_neg > 0 && negatives.empty()) {
    throw Error(Errc::invalid_argument, "no negative samples for '" + node.key() + "'");
  }

  auto k_pos = std::min(options.n_pos, positives.size());
  auto k_neg = std::min(options.n_neg, negatives.size());
  if (options.n_pos == options.n_neg) k_pos = k_neg = std::min(k_pos, k_neg);

  ConceptDataset ds;
  ds.concept_node = node;
  ds.modality = modality;
  Rng rng(options.seed);
  ds.positives = draw(positives, k_pos, rng);
  ds.negatives = draw(negatives, k_neg, rng);

  auto& m = ds.manifest;
  m.concept_key = node.key();
  if (node.concept_id) m.qids.push_back(node.concept_id->str());
  for (const auto& p : positives) {
    const auto& q = source_qid(p).str();
    if (std::find(m.qids.begin(), m.qids.end(), q) == m.qids.end()) m.qids.push_back(q);
  }
  m.modality = modality;
  m.seed = options.seed;
  m.requested_pos = options.n_pos;
  m.requested_neg = options.n_neg;
  m.achieved_pos = ds.positives.size();
  m.achieved_neg = ds.negatives.size();
  m.candidate_pos = positives.size();
  m.candidate_neg = negatives.size();
  m.balance_downgraded = k_pos < options.n_pos || k_neg < options.n_neg;
  m.created_at = io::utc_timestamp();
  ds.candidate_positives = std::move(positives);
  ds.candidate_negatives = std::move(negatives);
  return ds;
}

ConceptDataset reassemble(const ConceptDataset& dataset) {
  auto again = assemble_dataset(dataset.concept_node, dataset.modality, dataset.candidate_positives,
                                dataset.candidate_negatives,
                                {dataset.manifest.requested_pos, dataset.manifest.requested_neg, dataset.manifest.seed});
  again.manifest.query = dataset.manifest.query;
  again.manifest.qids = dataset.manifest.qids;
  return again;
}

fs::path dataset_dir(const fs::path& data_root, const kg::ConceptNode& node, Modality modality) {
  auto key = node.key();
  std::replace(key.begin(), key.end(), ':', '_');
  return data_root / key / std::string(to_string(modality));
}

fs::path save_dataset(const ConceptDataset& dataset, const fs::path& data_root) {
  const auto dir = dataset_dir(data_root, dataset.concept_node, dataset.modality);
  fs::create_directories(dir);
  auto doc = manifest_json(dataset.manifest);
  doc["concept_node"] = kg::to_json(dataset.concept_node);
  doc["positives"] = nlohmann::json::array();
  doc["negatives"] = nlohmann::json::array();
  for (const auto& s : dataset.positives) doc["positives"].push_back(to_json(s));
  for (const auto& s : dataset.negatives) doc["negatives"].push_back(to_json(s));

  std::string candidates;
  for (const auto& s : dataset.candidate_positives) {
    candidates += nlohmann::json{{"role", "positive"}, {"sample", to_json(s)}}.dump() + "\n";
  }
  for (const auto& s : dataset.candidate_negatives) {
    candidates += nlohmann::json{{"role", "negative"}, {"sample", to_json(s)}}.dump() + "\n";
  }
  io::write_atomic(dir / "candidates.jsonl", candidates);

  if (dataset.modality == Modality::text) {
    std::string lines;
    for (const auto& s : dataset.positives) {
      auto j = to_json(s);
      j["label"] = 1;
      lines += j.dump() + "\n";
    }
    for (const auto& s : dataset.negatives) {
      auto j = to_json(s);
      j["label"] = -1;
      lines += j.dump() + "\n";
    }
    io::write_atomic(dir / "sentences.jsonl", lines);
  }
  const auto path = dir / "manifest.json";
  io::write_json(path, doc);
  return path;
}

ConceptDataset load_dataset(const fs::path& manifest_path) {
  const auto doc = io::read_json(manifest_path);
  try {
    ConceptDataset ds;
    ds.manifest = manifest_from_json(doc);
    ds.modality = ds.manifest.modality;
    ds.concept_node = kg::node_from_json(doc.at("concept_node"));
    for (const auto& s : doc.at("positives")) ds.positives.push_back(sample_from_json(s));
    for (const auto& s : doc.at("negatives")) ds.negatives.push_back(sample_from_json(s));
    if (ds.positives.size() != ds.manifest.achieved_pos || ds.negatives.size() != ds.manifest.achieved_neg) {
      throw Error(Errc::parse, manifest_path.string() + ": manifest counts do not match sample lists");
    }
    const auto cand_path = manifest_path.parent_path() / "candidates.jsonl";
    if (fs::exists(cand_path)) {
      std::ifstream in(cand_path);
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        auto s = sample_from_json(j.at("sample"));
        (j.at("role") == "positive" ? ds.candidate_positives : ds.candidate_negatives).push_back(std::move(s));
      }
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, manifest_path.string() + ": " + e.what());
  }
}

void save_pool(const NegativePool& pool, const fs::path& path) {
  nlohmann::json doc{{"modality", to_string(pool.modality)}, {"manifest", pool.manifest}, {"count", pool.items.size()}};
  doc["items"] = nlohmann::json::array();
  for (const auto& s : pool.items) doc["items"].push_back(to_json(s));
  io::write_json(path, doc);
}

NegativePool load_pool(const fs::path& path) {
  const auto doc = io::read_json(path);
  NegativePool pool;
  try {
    pool.modality = parse_modality(doc.at("modality").get<std::string>());
    pool.manifest = doc.value("manifest", nlohmann::json::object());
    for (const auto& s : doc.at("items")) pool.items.push_back(sample_from_json(s));
    if (doc.contains("count") && doc["count"].get<std::size_t>() != pool.items.size()) {
      throw Error(Errc::parse, path.string() + ": pool count does not match items");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
  return pool;
}

std::vector<Sample> sample_negatives(const NegativePool& pool, std::size_t n, const std::set<std::string>& exclude,
                                     std::uint64_t seed) {
  std::vector<Sample> eligible;
  for (const auto& s : pool.items) {
    if (!exclude.contains(source_qid(s).str())) eligible.push_back(s);
  }
  if (eligible.size() < n) {
    throw Error(Errc::invalid_argument, "negative pool has " + std::to_string(eligible.size()) +
                                            " eligible items, " + std::to_string(n) + " requested");
  }
  Rng rng(seed);
  return draw(eligible, n, rng);
}

std::string commons_depicts_query(const kg::ConceptId& id) {
  return "SELECT DISTINCT ?file ?url ?item WHERE { "
         "SERVICE <https://query.wikidata.org/sparql> { ?item wdt:P31?/wdt:P279* wd:" +
         id.str() +
         " . } "
         "?file wdt:P180 ?item . "
         "?file schema:contentUrl ?url . }";
}

std::string subclass_articles_query(const kg::ConceptId& id) {
  return "SELECT DISTINCT ?item ?article WHERE { ?item wdt:P31?/wdt:P279* wd:" + id.str() +
         " . ?article schema:about ?item ; schema:isPartOf <https://en.wikipedia.org/> . } LIMIT 5000";
}

std::vector<ImageRef> parse_commons_bindings(std::string_view body) {
  const auto doc = parse_body(body, "Commons SPARQL");
  std::vector<ImageRef> out;
  std::set<std::string> seen;
  try {
    for (const auto& row : doc.at("results").at("bindings")) {
      if (!row.contains("url") || !row.contains("item")) continue;
      auto qid = qid_from_uri(row["item"].at("value").get<std::string>());
      if (!qid) continue;
      const auto url = row["url"].at("value").get<std::string>();
      auto title = title_from_file_url(url);
      if (!seen.insert(title).second) continue;
      out.push_back({std::move(title), *qid, url, std::nullopt});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::upstream, std::string("malformed Commons bindings: ") + e.what());
  }
  return out;
}

std::string thumbnail_url(std::string_view title, int width, std::string_view base) {
  auto name = std::string(title.rfind("File:", 0) == 0 ? title.substr(5) : title);
  std::replace(name.begin(), name.end(), ' ', '_');
  return std::string(base) + net::url_encode(name) + "?width=" + std::to_string(width);
}

std::optional<std::string> parse_extract(std::string_view body) {
  const auto doc = parse_body(body, "extracts");
  if (!doc.contains("query") || !doc["query"].contains("pages")) return std::nullopt;
  const auto& pages = doc["query"]["pages"];
  for (const auto& page : pages) {  // array (formatversion=2) or object
    if (page.contains("missing") || !page.contains("extract")) continue;
    return page["extract"].get<std::string>();
  }
  return std::nullopt;
}

CorpusClient::CorpusClient(net::HttpClient& http, kg::WikidataClient& wikidata, Endpoints endpoints)
    : http_(http), wikidata_(wikidata), endpoints_(std::move(endpoints)) {}

std::vector<ImageRef> CorpusClient::commons_image_query(const kg::ConceptId& id) {
  const auto url = net::build_url(endpoints_.commons_sparql, {{"query", commons_depicts_query(id)}, {"format", "json"}});
  return parse_commons_bindings(http_.get(url));
}

DownloadReport CorpusClient::download_images(const std::vector<ImageRef>& refs, const fs::path& dest,
                                             int max_edge_px, int workers) {
  DownloadReport report;
  std::vector<ImageRef> unique;
  std::set<std::string> seen;
  for (const auto& r : refs) {
    if (seen.insert(r.title).second) unique.push_back(r);
  }
  if (unique.empty()) return report;
  fs::create_directories(dest);

  std::vector<std::optional<ImageRef>> done(unique.size());
  std::vector<std::optional<std::string>> errors(unique.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next++; i < unique.size(); i = next++) {
      const auto& ref = unique[i];
      try {
        auto response = http_.fetch(thumbnail_url(ref.title, max_edge_px, endpoints_.commons_file_path));
        if (response.status != 200) {
          errors[i] = "HTTP " + std::to_string(response.status);
        } else if (response.body.empty()) {
          errors[i] = "empty body";
        } else {
          const auto path = dest / safe_filename(ref.title);
          io::write_atomic(path, response.body);
          auto ok = ref;
          ok.local_path = path;
          done[i] = std::move(ok);
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::clamp(workers, 1, 64));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(n_workers, unique.size()); ++w) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < unique.size(); ++i) {
    if (done[i]) {
      report.downloaded.push_back(std::move(*done[i]));
    } else {
      spdlog::warn("download of '{}' failed: {}", unique[i].title, errors[i].value_or("unknown"));
      report.failures.push_back({unique[i].title, errors[i].value_or("unknown")});
    }
  }
  if (report.downloaded.empty()) {
    throw Error(Errc::upstream, "all " + std::to_string(unique.size()) + " image downloads failed");
  }
  return report;
}

std::optional<std::string> CorpusClient::article_text(const std::string& title) {
  const auto url = net::build_url(endpoints_.wikipedia_api, {{"action", "query"},
                                                             {"prop", "extracts"},
                                                             {"explaintext", "1"},
                                                             {"exsectionformat", "plain"},
                                                             {"redirects", "1"},
                                                             {"titles", title},
                                                             {"format", "json"},
                                                             {"formatversion", "2"}});
  return parse_extract(http_.get(url));
}

std::vector<SentenceSample> CorpusClient::wikipedia_sentences(const kg::ConceptId& id, const SentenceOptions& options) {
  std::vector<SentenceSample> main;
  std::optional<std::string> main_title;
  const auto summary = wikidata_.entity(id);
  if (summary.enwiki_title && !summary.enwiki_title->empty()) {
    main_title = summary.enwiki_title;
    if (auto text = article_text(*main_title)) {
      main = sentences_from_article(*text, *main_title, id, options.min_chars, options.max_chars);
    }
  }
  if (main.size() >= options.target) return main;

  const auto doc = wikidata_.sparql(subclass_articles_query(id));
  std::vector<std::pair<std::string, kg::ConceptId>> articles;
  std::set<std::string> seen_titles;
  for (const auto& row : doc.at("results").at("bindings")) {
    if (!row.contains("article") || !row.contains("item")) continue;
    auto qid = qid_from_uri(row["item"].at("value").get<std::string>());
    if (!qid) continue;
    auto title = title_from_article_url(row["article"].at("value").get<std::string>());
    if (main_title && title == *main_title) continue;
    if (seen_titles.insert(title).second) articles.emplace_back(std::move(title), *qid);
  }
  if (!main_title && articles.empty()) {
    throw Error(Errc::not_found, "no Wikipedia article for " + id.str() + " or its subclasses");
  }

  Rng rng(options.seed);
  shuffle(articles, rng);
  std::vector<SentenceSample> extra;
  std::size_t fetched = 0;
  for (const auto& [title, qid] : articles) {
    if (main.size() + extra.size() >= options.target * 2 || fetched >= options.max_supplement_articles) break;
    ++fetched;
    try {
      if (auto text = article_text(title)) {
        auto part = sentences_from_article(*text, title, qid, options.min_chars, options.max_chars);
        extra.insert(extra.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
      }
    } catch (const Error& e) {
      spdlog::warn("skipping article '{}': {}", title, e.what());
    }
  }
  const auto needed = options.target - main.size();
  for (auto i : sample_indices(extra.size(), needed, rng)) main.push_back(std::move(extra[i]));
  return main;
}

NegativePool CorpusClient::build_image_pool(const std::vector<kg::ConceptId>& unrelated, std::size_t per_concept,
                                            std::uint64_t seed) {
  NegativePool pool;
  pool.modality = Modality::image;
  Rng rng(seed);
  auto qids = nlohmann::json::array();
  for (const auto& id : unrelated) {
    auto refs = commons_image_query(id);
    for (auto i : sample_indices(refs.size(), per_concept, rng)) pool.items.push_back(refs[i]);
    qids.push_back(id.str());
  }
  pool.items = dedup(std::move(pool.items));
  pool.manifest = {{"source", "commons-depicts"}, {"qids", qids}, {"per_concept", per_concept},
                   {"seed", seed}, {"created_at", io::utc_timestamp()}};
  return pool;
}

NegativePool CorpusClient::build_text_pool(std::size_t n_articles, std::uint64_t seed, const SentenceOptions& options) {
  NegativePool pool;
  pool.modality = Modality::text;
  std::size_t articles = 0;
  std::size_t empty_batches = 0;
  while (articles < n_articles && empty_batches < 5) {
    const auto batch = std::min<std::size_t>(20, n_articles - articles);
    const auto url = net::build_url(endpoints_.wikipedia_api, {{"action", "query"},
                                                               {"generator", "random"},
                                                               {"grnnamespace", "0"},
                                                               {"grnlimit", std::to_string(batch)},
                                                               {"prop", "extracts|pageprops"},
                                                               {"ppprop", "wikibase_item"},
                                                               {"exintro", "1"},
                                                               {"explaintext", "1"},
                                                               {"exlimit", "20"},
                                                               {"format", "json"},
                                                               {"formatversion", "2"}});
    const auto doc = parse_body(http_.get(url, net::CacheMode::bypass), "random articles");
    std::size_t added = 0;
    if (doc.contains("query") && doc["query"].contains("pages")) {
      for (const auto& page : doc["query"]["pages"]) {
        if (!page.contains("pageprops") || !page["pageprops"].contains("wikibase_item")) continue;
        const auto qid_text = page["pageprops"]["wikibase_item"].get<std::string>();
        if (!kg::ConceptId::is_valid(qid_text)) continue;
        auto part = sentences_from_article(page.value("extract", std::string{}), page.value("title", std::string{}),
                                           kg::ConceptId::parse(qid_text), options.min_chars, options.max_chars);
        for (auto& s : part) pool.items.push_back(std::move(s));
        ++added;
      }
    }
    articles += added;
    empty_batches = added == 0 ? empty_batches + 1 : 0;
  }
  pool.items = dedup(std::move(pool.items));
  pool.manifest = {{"source", "wikipedia-random"}, {"articles", articles}, {"seed", seed},
                   {"created_at", io::utc_timestamp()}};
  return pool;
}

}  // namespace cforge::corpus
