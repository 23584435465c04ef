#include "support/support.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "cforge/corpus.hpp"
#include "cforge/error.hpp"
#include "cforge/io.hpp"
#include "cforge/random.hpp"
#include "cforge/wikidata.hpp"

namespace cforge::testkit {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fixture_dir() { return CFORGE_FIXTURE_DIR; }

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  Rng rng(std::random_device{}());
  path_ = fs::temp_directory_path() /
          ("cforge-test-" + std::to_string(rng() % 1000000000) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

Eigen::VectorXd random_unit(std::size_t d, Rng& rng) {
  Eigen::VectorXd u(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = standard_normal(rng);
  return u.normalized();
}

}  // namespace

Labeled planted_gaussian(std::size_t n, std::size_t d, double margin, std::uint64_t seed) {
  Rng rng(seed);
  Labeled out;
  out.direction = random_unit(d, rng);
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.x.rows(); ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    out.y(i) = label;
    for (Eigen::Index j = 0; j < out.x.cols(); ++j) out.x(i, j) = standard_normal(rng);
    out.x.row(i) += label * margin * out.direction.transpose();
  }
  return out;
}

Labeled concentric_circles(std::size_t n, double factor, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Labeled out;
  out.x.resize(static_cast<Eigen::Index>(n), 2);
  out.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.x.rows(); ++i) {
    const bool inner = i % 2 == 0;
    const double angle = 2.0 * M_PI * uniform_unit(rng);
    const double r = inner ? factor : 1.0;
    out.x(i, 0) = r * std::cos(angle) + noise * standard_normal(rng);
    out.x(i, 1) = r * std::sin(angle) + noise * standard_normal(rng);
    out.y(i) = inner ? 1 : -1;
  }
  return out;
}

acts::ActivationMatrix as_activations(const Eigen::MatrixXd& x, int layer, const std::string& prefix,
                                      const std::string& concept_qid) {
  acts::ActivationMatrix m;
  m.data = x.cast<float>();
  m.layer_index = layer;
  m.model_id = "toy-model";
  m.concept_qid = concept_qid;
  for (Eigen::Index i = 0; i < x.rows(); ++i) m.sample_ids.push_back(prefix + std::to_string(i));
  return m;
}

PlantedConcept planted_concept(std::size_t n_pos, std::size_t n_neg, std::size_t d, double mu, int layers,
                               std::uint64_t seed) {
  Rng rng(seed);
  PlantedConcept out;
  const auto u = random_unit(d, rng);
  auto gaussian = [&](std::size_t n) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = standard_normal(rng);
    }
    return x;
  };
  for (int layer = 0; layer < layers; ++layer) {
    Eigen::MatrixXd pos = gaussian(n_pos);
    pos.rowwise() += mu * u.transpose();
    out.pos[layer] = as_activations(pos, layer, "pos-");
    out.neg[layer] = as_activations(gaussian(n_neg), layer, "neg-");
    out.directions.push_back(u);
  }
  return out;
}

void write_stack(const acts::LayerStack& stack, const fs::path& acts_root, const std::string& model,
                 const std::string& qid, const std::string& split) {
  for (const auto& [layer, m] : stack) {
    auto copy = m;
    copy.model_id = model;
    acts::write_actv(copy, acts::layer_path(acts_root, model, qid, split, layer));
  }
}

std::shared_ptr<net::FixtureTransport> wikimedia_fixtures(const fs::path& dir) {
  const auto http = fixture_dir() / "http";
  json routes = json::array();
  auto route = [&](const std::string& url, const std::string& file, int status = 200) {
    routes.push_back({{"url", url}, {"file", (http / file).string()}, {"status", status}});
  };
  auto search = [](const std::string& q) {
    return net::build_url(kg::kWikidataApi, {{"action", "wbsearchentities"},
                                             {"search", q},
                                             {"language", "en"},
                                             {"uselang", "en"},
                                             {"type", "item"},
                                             {"limit", "10"},
                                             {"format", "json"}});
  };
  auto entity = [](const std::string& q) {
    return net::build_url(kg::kWikidataApi, {{"action", "wbgetentities"},
                                             {"ids", q},
                                             {"props", "labels|descriptions|sitelinks"},
                                             {"languages", "en"},
                                             {"sitefilter", "enwiki"},
                                             {"format", "json"}});
  };
  auto sparql = [](std::string_view endpoint, const std::string& query) {
    return net::build_url(endpoint, {{"query", query}, {"format", "json"}});
  };
  auto extract = [](const std::string& title) {
    return net::build_url(corpus::kWikipediaApi, {{"action", "query"},
                                                  {"prop", "extracts"},
                                                  {"explaintext", "1"},
                                                  {"exsectionformat", "plain"},
                                                  {"redirects", "1"},
                                                  {"titles", title},
                                                  {"format", "json"},
                                                  {"formatversion", "2"}});
  };
  auto q = [](const char* s) { return kg::ConceptId::parse(s); };

  route(search("house"), "wd_search_house.json");
  route(search("apple"), "wd_search_apple.json");
  route(search("garbage"), "garbage.txt");
  route(search("overloaded"), "sparql_empty.json", 503);
  for (const char* id : {"Q3947", "Q5783", "Q146", "Q999999999"}) {
    route(entity(id), std::string("wd_entity_") + id + ".json");
  }
  route(sparql(kg::kWikidataSparql, kg::subconcept_query(q("Q3947"))), "wd_sub_Q3947.json");
  route(sparql(kg::kWikidataSparql, kg::subconcept_query(q("Q5783"))), "wd_sub_Q5783.json");
  route(sparql(kg::kWikidataSparql, kg::subconcept_query(q("Q1420"))), "wd_sub_Q1420.json");
  for (const char* id : {"Q3046146", "Q1195942", "Q2001305", "Q146"}) {
    route(sparql(kg::kWikidataSparql, kg::subconcept_query(q(id))), "sparql_empty.json");
  }
  route(sparql(kg::kWikidataSparql, kg::superconcept_query(q("Q3947"))), "wd_super_Q3947.json");
  route(sparql(kg::kWikidataSparql, corpus::subclass_articles_query(q("Q5783"))), "wd_articles_Q5783.json");
  route(sparql(corpus::kCommonsSparql, corpus::commons_depicts_query(q("Q146"))), "commons_Q146.json");
  route(sparql(corpus::kCommonsSparql, corpus::commons_depicts_query(q("Q3947"))), "sparql_empty.json");
  route(extract("House"), "wp_extract_house.json");
  route(extract("Cottage"), "wp_extract_cottage.json");
  route(extract("Summer cottage"), "wp_extract_summer_cottage.json");
  route(extract("Tree house"), "wp_extract_tree_house.json");
  route(net::build_url(corpus::kWikipediaApi, {{"action", "query"},
                                               {"generator", "random"},
                                               {"grnnamespace", "0"},
                                               {"grnlimit", "2"},
                                               {"prop", "extracts|pageprops"},
                                               {"ppprop", "wikibase_item"},
                                               {"exintro", "1"},
                                               {"explaintext", "1"},
                                               {"exlimit", "20"},
                                               {"format", "json"},
                                               {"formatversion", "2"}}),
        "wp_random.json");
  net::HttpClient offline(nullptr, {});
  kg::ConceptNetClient conceptnet_urls(offline);
  for (const auto& rel : kg::default_conceptnet_relations()) {
    const auto file = rel == "IsA" ? "cn_cat_IsA.json" : rel == "HasA" ? "cn_cat_HasA.json" : "cn_empty.json";
    route(conceptnet_urls.query_url("cat", rel), file);
  }
  io::write_json(dir / "routes.json", {{"routes", routes}});
  return std::make_shared<net::FixtureTransport>(dir);
}

FakeBackend::FakeBackend(fs::path data_dir) : data_dir_(std::move(data_dir)) {}

namespace {

kg::ConceptNode fake_node(const std::string& qid, const std::string& label, int depth) {
  kg::ConceptNode n;
  n.concept_id = kg::ConceptId::parse(qid);
  n.label = label;
  n.depth = depth;
  return n;
}

}  // namespace

std::vector<kg::DisambiguationCandidate> FakeBackend::search(const std::string& query) {
  if (query == "house") {
    return {{kg::ConceptId::parse("Q3947"), "house", "building usually intended for living in", false},
            {kg::ConceptId::parse("Q23558"), "House", "American medical drama television series", false},
            {kg::ConceptId::parse("Q20502"), "house music", "genre of electronic dance music", false},
            {kg::ConceptId::parse("Q5913"), "House", "", true}};
  }
  return {};
}

kg::ConceptNode FakeBackend::resolve(const kg::ConceptId& id) {
  if (id.str() == "Q3947") return fake_node("Q3947", "house", 0);
  if (id.str() == "Q5783") return fake_node("Q5783", "cottage", 0);
  if (id.str() == "Q1195942") return fake_node("Q1195942", "tree house", 0);
  if (id.str() == "Q41176") return fake_node("Q41176", "building", 0);
  throw Error(Errc::not_found, "unknown concept " + id.str());
}

std::vector<kg::ConceptNode> FakeBackend::children(const kg::ConceptId& id) {
  if (id.str() == "Q3947") return {fake_node("Q5783", "cottage", 1), fake_node("Q1195942", "tree house", 1)};
  if (id.str() == "Q41176") return {fake_node("Q3947", "house", 1)};
  return {};
}

std::vector<kg::ConceptNode> FakeBackend::parents(const kg::ConceptId& id) {
  if (id.str() == "Q3947") return {fake_node("Q41176", "building", 0)};
  if (id.str() == "Q5783" || id.str() == "Q1195942") return {fake_node("Q3947", "house", 0)};
  return {};
}

service::Preview FakeBackend::preview(const kg::ConceptNode& node, corpus::Modality, std::size_t limit) {
  service::Preview p;
  if (node.concept_id && node.concept_id->str() != "Q1195942") {
    for (std::size_t i = 0; i < 20 && p.items.size() < limit; ++i) {
      const auto title = "File:" + node.label + " " + std::to_string(i) + ".jpg";
      p.items.emplace_back(corpus::ImageRef{title, *node.concept_id, "https://example.org/" + std::to_string(i), {}});
      p.thumbnails.push_back(corpus::thumbnail_url(title, 320));
    }
  }
  p.empty = p.items.empty();
  return p;
}

fs::path FakeBackend::build_dataset(const service::DatasetRequest& req) {
  ++build_calls;
  if (fail_build) throw Error(Errc::upstream, "retrieval failed");
  std::vector<corpus::Sample> pos;
  std::vector<corpus::Sample> neg;
  std::vector<kg::ConceptId> qids{*req.node.concept_id};
  qids.insert(qids.end(), req.subconcepts.begin(), req.subconcepts.end());
  for (const auto& q : qids) {
    for (int i = 0; i < 10; ++i) {
      pos.emplace_back(corpus::ImageRef{"File:" + q.str() + "-" + std::to_string(i) + ".jpg", q, "u", {}});
    }
  }
  for (int i = 0; i < 40; ++i) {
    neg.emplace_back(corpus::ImageRef{"File:neg-" + std::to_string(i) + ".jpg", kg::ConceptId::parse("Q7"), "u", {}});
  }
  auto ds = corpus::assemble_dataset(req.node, req.modality, pos, neg, {req.n_pos, req.n_neg, req.seed});
  ds.manifest.qids.clear();
  for (const auto& q : qids) ds.manifest.qids.push_back(q.str());
  return corpus::save_dataset(ds, data_dir_);
}

}  // namespace cforge::testkit
