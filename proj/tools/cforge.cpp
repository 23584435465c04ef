// cforge: define concepts, fetch datasets, train probes, run experiments and
// serve the concept-definition API.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cforge/corpus.hpp"
#include "cforge/error.hpp"
#include "cforge/io.hpp"
#include "cforge/runner.hpp"
#include "cforge/service.hpp"
#include "cforge/wikidata.hpp"
#include "cforge/wordnet.hpp"

namespace fs = std::filesystem;
using namespace cforge;

namespace {

constexpr const char* kUserAgent = "cforge/0.1 (concept dataset toolkit; local research use)";

struct Globals {
  std::string data_dir = "cforge-data";
  std::string cache_dir;
  bool offline = false;
  double rps = 5.0;
  bool verbose = false;
};

struct Clients {
  std::unique_ptr<net::HttpClient> http;
  std::unique_ptr<kg::WikidataClient> wikidata;
  std::unique_ptr<corpus::CorpusClient> corpus;
};

Clients make_clients(const Globals& g) {
  net::HttpClient::Options options;
  options.cache_dir = g.cache_dir.empty() ? fs::path(g.data_dir) / "cache" : fs::path(g.cache_dir);
  options.requests_per_second = g.rps;
  Clients c;
  c.http = std::make_unique<net::HttpClient>(g.offline ? nullptr : net::make_live_transport(kUserAgent), options);
  c.wikidata = std::make_unique<kg::WikidataClient>(*c.http);
  c.corpus = std::make_unique<corpus::CorpusClient>(*c.http, *c.wikidata);
  return c;
}

std::vector<kg::ConceptId> parse_qids(const std::vector<std::string>& items) {
  std::vector<kg::ConceptId> out;
  for (const auto& s : items) out.push_back(kg::ConceptId::parse(s));
  return out;
}

std::vector<experiments::ProbeKind> parse_kinds(const std::vector<std::string>& items) {
  std::vector<experiments::ProbeKind> out;
  for (const auto& k : items) {
    if (k == "cav") {
      out.push_back(experiments::ProbeKind::cav);
    } else if (k == "car") {
      out.push_back(experiments::ProbeKind::car);
    } else {
      throw Error(Errc::invalid_argument, "unknown probe kind '" + k + "'");
    }
  }
  return out;
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
    case Errc::parse:
      return 2;
    case Errc::not_found:
      return 3;
    case Errc::upstream:
      return 4;
    default:
      return 1;
  }
}

service::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept datasets from knowledge graphs, and CAV/CAR probes over model activations"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data-dir", g.data_dir, "Datasets, sessions, pools and runs")->envname("CFORGE_DATA_DIR");
  app.add_option("--cache-dir", g.cache_dir, "HTTP response cache (default <data-dir>/cache)")
      ->envname("CFORGE_CACHE_DIR");
  app.add_flag("--offline", g.offline, "Serve only cached responses")->envname("CFORGE_OFFLINE");
  app.add_option("--rps", g.rps, "Requests per second per endpoint")->envname("CFORGE_RPS");
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  // define
  auto* define = app.add_subcommand("define", "Disambiguate a concept and list its hierarchy");
  std::string query;
  std::string qid;
  std::string source = "wikidata";
  std::string wordnet_dir;
  std::string synset;
  int depth = 2;
  std::string graph_out;
  define->add_option("query", query, "Concept name to search for");
  define->add_option("--qid", qid, "Chosen Wikidata sense; without it only candidates are listed");
  define->add_option("--source", source, "wikidata or wordnet")->check(CLI::IsMember({"wikidata", "wordnet"}));
  define->add_option("--wordnet-dir", wordnet_dir, "WordNet 3.0 dict directory")->envname("CFORGE_WORDNET_DIR");
  define->add_option("--synset", synset, "Chosen WordNet sense, e.g. sport.n.01");
  define->add_option("--depth", depth, "Hierarchy depth below the chosen concept");
  define->add_option("-o,--out", graph_out, "Write the concept graph JSON here");

  // fetch
  auto* fetch = app.add_subcommand("fetch", "Retrieve a concept dataset or a negative pool");
  std::string modality = "image";
  std::vector<std::string> subconcepts;
  std::size_t n_pos = 200;
  std::size_t n_neg = 200;
  std::uint64_t seed = 0;
  bool pool = false;
  std::vector<std::string> unrelated;
  std::size_t per_concept = 50;
  std::size_t articles = 500;
  bool no_download = false;
  fetch->add_option("--qid", qid, "Main concept");
  fetch->add_option("--modality", modality)->check(CLI::IsMember({"image", "text"}));
  fetch->add_option("--subconcepts", subconcepts, "Sub-concept QIDs to include")->delimiter(',');
  fetch->add_option("--n-pos", n_pos);
  fetch->add_option("--n-neg", n_neg);
  fetch->add_option("--seed", seed);
  fetch->add_flag("--pool", pool, "Build the negative pool instead of a dataset");
  fetch->add_option("--unrelated", unrelated, "Concepts for the image pool")->delimiter(',');
  fetch->add_option("--per-concept", per_concept, "Images per unrelated concept");
  fetch->add_option("--articles", articles, "Random articles for the text pool");
  fetch->add_flag("--no-download", no_download, "Record image references without downloading");

  // train
  auto* train = app.add_subcommand("train", "Train CAV/CAR probes per layer");
  experiments::TrainRequest tr;
  std::string acts_dir;
  std::string probes_dir;
  std::vector<std::string> kinds{"cav", "car"};
  train->add_option("--acts-dir", acts_dir)->required();
  train->add_option("--probes-dir", probes_dir)->required();
  train->add_option("--model", tr.model_id)->required();
  train->add_option("--concept", tr.concept_key)->required();
  train->add_option("--negatives", tr.negatives_key, "Concept directory holding negatives (default: --concept)");
  train->add_option("--negative-split", tr.negative_split);
  train->add_option("--layers", tr.layers)->delimiter(',');
  train->add_option("--kinds", kinds)->delimiter(',');
  train->add_option("--n-per-class", tr.n_per_class);
  train->add_option("--seed", tr.seed);
  train->add_option("--C", tr.svm.C);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Run an experiment from a JSON config");
  std::string config_path;
  std::string runs_dir;
  std::string rerun_dir;
  auto* config_opt = analyze->add_option("config", config_path, "Experiment config JSON");
  analyze->add_option("--runs-dir", runs_dir, "Report root (default <data-dir>/runs)");
  analyze->add_option("--rerun", rerun_dir, "Re-execute a stored run directory")->excludes(config_opt);

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the /api/v1 HTTP API");
  int port = service::kDefaultPort;
  std::string host = "127.0.0.1";
  std::string static_dir;
  serve->add_option("--port", port)->envname("CFORGE_PORT");
  serve->add_option("--host", host)->envname("CFORGE_HOST");
  serve->add_option("--static-dir", static_dir, "UI build to serve at /")->envname("CFORGE_STATIC_DIR");
  serve->add_option("--runs-dir", runs_dir);

  // report
  auto* report = app.add_subcommand("report", "List runs or print one report");
  std::string run_id;
  report->add_option("run", run_id, "Run id <experiment>/<timestamp>");
  report->add_option("--runs-dir", runs_dir);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
  const fs::path runs_root = runs_dir.empty() ? fs::path(g.data_dir) / "runs" : fs::path(runs_dir);

  try {
    if (*define) {
      if (source == "wordnet") {
        if (wordnet_dir.empty()) throw Error(Errc::invalid_argument, "--wordnet-dir or CFORGE_WORDNET_DIR is required");
        const auto db = kg::WordNetDb::load_directory(wordnet_dir);
        if (synset.empty()) {
          for (const auto* rec : db.lookup(query, 'n')) {
            std::cout << db.ref_for(*rec).to_string() << "\t" << rec->gloss << "\n";
          }
          return 0;
        }
        const auto graph = kg::wordnet_graph(db, kg::SynsetRef::parse(synset), depth);
        if (graph_out.empty()) {
          std::cout << graph.to_json().dump(2) << "\n";
        } else {
          io::write_json(graph_out, graph.to_json());
        }
        return 0;
      }
      auto clients = make_clients(g);
      if (qid.empty()) {
        if (query.empty()) throw Error(Errc::invalid_argument, "give a query or --qid");
        for (const auto& c : clients.wikidata->search(query)) {
          std::cout << c.concept_id.str() << "\t" << c.label << "\t"
                    << (c.description_missing ? "(no description)" : c.description) << "\n";
        }
        return 0;
      }
      const auto graph = kg::wikidata_graph(*clients.wikidata, kg::ConceptId::parse(qid), depth);
      if (graph_out.empty()) {
        std::cout << graph.to_json().dump(2) << "\n";
      } else {
        io::write_json(graph_out, graph.to_json());
      }
      return 0;
    }

    if (*fetch) {
      auto clients = make_clients(g);
      const auto mod = corpus::parse_modality(modality);
      if (pool) {
        corpus::NegativePool p = mod == corpus::Modality::image
                                     ? clients.corpus->build_image_pool(parse_qids(unrelated), per_concept, seed)
                                     : clients.corpus->build_text_pool(articles, seed);
        const auto path = service::pool_path(g.data_dir, mod);
        corpus::save_pool(p, path);
        std::cout << path.string() << "\t" << p.items.size() << " items\n";
        return 0;
      }
      if (qid.empty()) throw Error(Errc::invalid_argument, "--qid is required");
      service::WikimediaBackend backend(*clients.wikidata, *clients.corpus, g.data_dir, !no_download);
      service::DatasetRequest req;
      req.node = backend.resolve(kg::ConceptId::parse(qid));
      req.subconcepts = parse_qids(subconcepts);
      req.modality = mod;
      req.n_pos = n_pos;
      req.n_neg = n_neg;
      req.seed = seed;
      std::cout << backend.build_dataset(req).string() << "\n";
      return 0;
    }

    if (*train) {
      tr.acts_dir = acts_dir;
      tr.probes_dir = probes_dir;
      tr.kinds = parse_kinds(kinds);
      for (const auto& stem : experiments::train_probes(tr)) std::cout << stem.string() << "\n";
      return 0;
    }

    if (*analyze) {
      if (!rerun_dir.empty()) {
        auto again = experiments::rerun(rerun_dir);
        std::cout << experiments::write_report(again, runs_root).string() << "\n";
        return 0;
      }
      if (config_path.empty()) throw Error(Errc::invalid_argument, "give a config file or --rerun");
      std::cout << experiments::run_and_write(io::read_json(config_path), runs_root).string() << "\n";
      return 0;
    }

    if (*serve) {
      auto clients = make_clients(g);
      service::WikimediaBackend backend(*clients.wikidata, *clients.corpus, g.data_dir);
      service::Service svc(backend, {g.data_dir, runs_root, service::kPreviewLimit});
      service::HttpServer server(svc, static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir));
      const int bound = server.bind(host, port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::info("serving http://{}:{}/api/v1 (data dir {})", host, bound, g.data_dir);
      server.serve();
      g_server = nullptr;
      return 0;
    }

    if (*report) {
      if (run_id.empty()) {
        for (const auto& id : experiments::list_runs(runs_root)) std::cout << id << "\n";
        return 0;
      }
      std::cout << io::read_file(experiments::run_dir(runs_root, run_id) / "report.json");
      return 0;
    }
  } catch (const Error& e) {
    spdlog::error("{} ({})", e.what(), to_string(e.code()));
    return exit_code(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
