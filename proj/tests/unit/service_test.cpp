#include <thread>

#include <gtest/gtest.h>

#include "cforge/io.hpp"
#include "cforge/report.hpp"
#include "cforge/service.hpp"
#include "support/support.hpp"

// after Eigen: <resolv.h> defines a `_res` macro
#include <httplib.h>

using namespace cforge;
using namespace cforge::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  testkit::TempDir dir;
  testkit::FakeBackend backend{dir / "data"};
  Service svc{backend, {dir / "data", {}, kPreviewLimit}};

  std::string new_session(const std::string& query = "house") {
    const auto r = svc.create_session({{"query", query}});
    EXPECT_EQ(r.status, 201);
    return r.body["session_id"];
  }
};

std::vector<std::string> qids_of(const json& array, const char* key = "qid") {
  std::vector<std::string> out;
  for (const auto& item : array) out.push_back(item.at(key));
  return out;
}

}  // namespace

TEST(Status, ErrorCodesMapToHttp) {
  EXPECT_EQ(http_status(Errc::invalid_argument), 400);
  EXPECT_EQ(http_status(Errc::parse), 400);
  EXPECT_EQ(http_status(Errc::not_found), 404);
  EXPECT_EQ(http_status(Errc::conflict), 409);
  EXPECT_EQ(http_status(Errc::upstream), 502);
  EXPECT_EQ(http_status(Errc::io), 500);
  EXPECT_EQ(http_status(Errc::numerical), 500);
  const auto r = error_response(std::runtime_error("boom"));
  EXPECT_EQ(r.status, 500);
  EXPECT_EQ(r.body["error"]["code"], "internal");
}

TEST(Sessions, CreateListsCandidatesWithoutChoosing) {
  Fixture f;
  const auto r = f.svc.create_session({{"query", "  house "}});
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(qids_of(r.body["candidates"], "qid"),
            (std::vector<std::string>{"Q3947", "Q23558", "Q20502", "Q5913"}));
  const auto s = f.svc.get_session(r.body["session_id"]);
  EXPECT_EQ(s.body["query"], "house");
  EXPECT_FALSE(s.body.contains("current") && !s.body["current"].is_null());

  EXPECT_EQ(f.svc.create_session({{"query", "   "}}).status, 400);
  EXPECT_EQ(f.svc.create_session(json::object()).status, 400);
  EXPECT_EQ(f.svc.create_session({{"query", 5}}).status, 400);
  EXPECT_EQ(f.svc.create_session({{"query", "house"}, {"modality", "video"}}).status, 400);
  EXPECT_EQ(f.svc.get_session("nosuch").status, 404);
}

TEST(Sessions, CreationIsIdempotentPerKey) {
  Fixture f;
  const auto a = f.svc.create_session({{"query", "house"}}, "key-1");
  const auto b = f.svc.create_session({{"query", "house"}}, "key-1");
  EXPECT_EQ(a.body, b.body);
  EXPECT_EQ(a.status, b.status);
  EXPECT_NE(f.svc.create_session({{"query", "house"}}, "key-2").body["session_id"], a.body["session_id"]);
}

TEST(Sessions, SelectShowsPreviewAndSubconcepts) {
  Fixture f;
  const auto id = f.new_session();
  const auto r = f.svc.select(id, {{"qid", "Q3947"}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["node"]["label"], "house");
  EXPECT_EQ(r.body["preview"]["items"].size(), kPreviewLimit);
  EXPECT_FALSE(r.body["preview"]["empty"].get<bool>());
  EXPECT_TRUE(r.body["preview"]["items"][0].contains("thumbnail"));
  EXPECT_EQ(qids_of(r.body["subconcepts"]), (std::vector<std::string>{"Q5783", "Q1195942"}));

  const auto empty = f.svc.select(id, {{"qid", "Q1195942"}});
  ASSERT_EQ(empty.status, 200);
  EXPECT_TRUE(empty.body["preview"]["empty"].get<bool>());
  EXPECT_TRUE(empty.body["preview"].contains("warning"));

  EXPECT_EQ(f.svc.select(id, {{"qid", "Q404"}}).status, 404);
  EXPECT_EQ(f.svc.select(id, {{"qid", "house"}}).status, 400);
  EXPECT_EQ(f.svc.select(id, json::object()).status, 400);
  EXPECT_EQ(f.svc.select("nosuch", {{"qid", "Q3947"}}).status, 404);
  // failed selects leave the session where it was
  EXPECT_EQ(f.svc.get_session(id).body["current"]["qid"], "Q1195942");
  EXPECT_EQ(f.svc.get_session(id).body["history"].size(), 2u);
}

TEST(Sessions, NavigateUpAndDown) {
  Fixture f;
  const auto id = f.new_session();
  EXPECT_EQ(f.svc.navigate(id, {{"direction", "down"}}).status, 400);  // nothing selected yet
  ASSERT_EQ(f.svc.select(id, {{"qid", "Q3947"}}).status, 200);

  const auto peek = f.svc.navigate(id, {{"direction", "down"}});
  ASSERT_EQ(peek.status, 200);
  EXPECT_EQ(qids_of(peek.body["children"], "qid"), (std::vector<std::string>{"Q5783", "Q1195942"}));
  EXPECT_EQ(peek.body["node"]["qid"], "Q3947");

  const auto down = f.svc.navigate(id, {{"direction", "down"}, {"target", "Q5783"}});
  ASSERT_EQ(down.status, 200);
  EXPECT_EQ(down.body["node"]["label"], "cottage");
  EXPECT_EQ(down.body["node"]["depth"], 1);

  const auto up = f.svc.navigate(id, {{"direction", "up"}, {"target", "Q3947"}});
  ASSERT_EQ(up.status, 200);
  EXPECT_EQ(up.body["node"]["depth"], 0);
  EXPECT_EQ(qids_of(up.body["parents"], "qid"), (std::vector<std::string>{"Q41176"}));

  EXPECT_EQ(f.svc.navigate(id, {{"direction", "down"}, {"target", "Q41176"}}).status, 400);
  EXPECT_EQ(f.svc.navigate(id, {{"direction", "sideways"}}).status, 400);
  EXPECT_EQ(f.svc.get_session(id).body["history"].size(), 3u);
}

TEST(Sessions, CommitRecordsSkipsAndLocks) {
  Fixture f;
  const auto id = f.new_session();
  ASSERT_EQ(f.svc.select(id, {{"qid", "Q3947"}}).status, 200);
  const json body{{"include_subconcepts", {{{"label", "cottage"}, {"qid", "Q5783"}}, {{"label", "tree house"}, {"qid", "skip"}}}},
                  {"n_pos", 15},
                  {"n_neg", 15},
                  {"seed", 2}};
  const auto r = f.svc.commit(id, body, "commit-1");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto manifest = r.body["manifest"];
  EXPECT_EQ(manifest["qids"], json({"Q3947", "Q5783"}));
  EXPECT_EQ(manifest["achieved"]["positives"], 15);
  EXPECT_TRUE(fs::exists(r.body["dataset_manifest_path"].get<std::string>()));
  EXPECT_EQ(f.backend.build_calls, 1);

  // replay returns the stored reply without rebuilding
  const auto replay = f.svc.commit(id, body, "commit-1");
  EXPECT_EQ(replay.status, 200);
  EXPECT_EQ(replay.body, r.body);
  EXPECT_EQ(f.backend.build_calls, 1);

  EXPECT_EQ(f.svc.commit(id, body).status, 409);
  EXPECT_EQ(f.svc.select(id, {{"qid", "Q3947"}}).status, 409);

  const auto session = f.svc.get_session(id).body;
  EXPECT_TRUE(session["committed"].get<bool>());
  ASSERT_EQ(session["pending"].size(), 2u);
  EXPECT_TRUE(session["pending"][1]["skipped"].get<bool>());
}

TEST(Sessions, FailedCommitCanBeRetried) {
  Fixture f;
  const auto id = f.new_session();
  ASSERT_EQ(f.svc.select(id, {{"qid", "Q3947"}}).status, 200);
  f.backend.fail_build = true;
  EXPECT_EQ(f.svc.commit(id, {{"n_pos", 5}, {"n_neg", 5}}).status, 502);
  EXPECT_FALSE(f.svc.get_session(id).body["committed"].get<bool>());
  f.backend.fail_build = false;
  EXPECT_EQ(f.svc.commit(id, {{"n_pos", 5}, {"n_neg", 5}}).status, 200);
}

TEST(Sessions, PersistAcrossRestart) {
  testkit::TempDir dir;
  testkit::FakeBackend backend(dir / "data");
  std::string id;
  {
    Service svc(backend, {dir / "data", {}, kPreviewLimit});
    id = svc.create_session({{"query", "house"}}, "k").body["session_id"];
    ASSERT_EQ(svc.select(id, {{"qid", "Q3947"}}).status, 200);
    ASSERT_EQ(svc.commit(id, {{"n_pos", 5}, {"n_neg", 5}}).status, 200);
  }
  io::write_atomic(dir / "data" / "sessions" / "broken.json", "{");
  Service again(backend, {dir / "data", {}, kPreviewLimit});
  const auto s = again.get_session(id);
  ASSERT_EQ(s.status, 200);
  EXPECT_TRUE(s.body["committed"].get<bool>());
  EXPECT_EQ(again.create_session({{"query", "house"}}, "k").body["session_id"], id);
  EXPECT_EQ(again.commit(id, {}).status, 409);

  const auto datasets = again.list_datasets();
  ASSERT_EQ(datasets.status, 200);
  ASSERT_EQ(datasets.body["datasets"].size(), 1u);
  EXPECT_EQ(datasets.body["datasets"][0]["qids"], json({"Q3947"}));
  EXPECT_EQ(datasets.body["datasets"][0]["achieved"]["negatives"], 5);
}

TEST(Runs, ListAndReport) {
  Fixture f;
  EXPECT_EQ(f.svc.list_runs().body["runs"], json::array());
  experiments::ExperimentReport r;
  r.experiment = "triplets";
  r.summary = {{"x", 1}};
  experiments::write_report(r, f.svc.options().runs_dir, "t1");
  EXPECT_EQ(f.svc.list_runs().body["runs"], json({"triplets/t1"}));
  const auto report = f.svc.run_report("triplets/t1");
  ASSERT_EQ(report.status, 200);
  ASSERT_TRUE(report.raw);
  EXPECT_EQ(json::parse(*report.raw)["summary"]["x"], 1);
  EXPECT_EQ(f.svc.run_report("../etc").status, 400);
  EXPECT_EQ(f.svc.run_report("triplets/t2").status, 404);
}

TEST(HttpApi, RoutesOverTheWire) {
  Fixture f;
  HttpServer server(f.svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.serve(); });
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);

  auto bad = client.Post("/api/v1/sessions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["error"]["code"], "parse");

  httplib::Headers key{{"Idempotency-Key", "abc"}};
  auto created = client.Post("/api/v1/sessions", key, R"({"query":"house"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string id = json::parse(created->body)["session_id"];
  auto again = client.Post("/api/v1/sessions", key, R"({"query":"house"})", "application/json");
  EXPECT_EQ(json::parse(again->body)["session_id"], id);

  auto sel = client.Post(("/api/v1/sessions/" + id + "/select").c_str(), R"({"qid":"Q3947"})", "application/json");
  ASSERT_TRUE(sel);
  EXPECT_EQ(sel->status, 200);
  auto nav = client.Post(("/api/v1/sessions/" + id + "/navigate").c_str(), R"({"direction":"up"})",
                         "application/json");
  EXPECT_EQ(nav->status, 200);
  auto commit = client.Post(("/api/v1/sessions/" + id + "/commit").c_str(), R"({"n_pos":5,"n_neg":5})",
                            "application/json");
  EXPECT_EQ(commit->status, 200);
  EXPECT_EQ(client.Post(("/api/v1/sessions/" + id + "/commit").c_str(), "{}", "application/json")->status, 409);

  EXPECT_EQ(client.Get(("/api/v1/sessions/" + id).c_str())->status, 200);
  EXPECT_EQ(client.Get("/api/v1/sessions/nosuch")->status, 404);
  auto datasets = client.Get("/api/v1/datasets");
  EXPECT_EQ(datasets->status, 200);
  EXPECT_EQ(json::parse(datasets->body)["datasets"].size(), 1u);
  EXPECT_EQ(client.Get("/api/v1/runs")->status, 200);
  EXPECT_EQ(client.Get("/api/v1/runs/x/y/report")->status, 404);
  EXPECT_EQ(client.Get("/api/v1/runs/x/report")->status, 400);

  server.stop();
  t.join();
}

TEST(HttpApi, MissingStaticDirIsAnError) {
  Fixture f;
  EXPECT_THROW(HttpServer(f.svc, f.dir / "no-ui"), Error);
}

TEST(WikimediaBackendFixtures, SearchPreviewAndDataset) {
  testkit::TempDir dir;
  net::ManualClock clock;
  net::HttpClient http(testkit::wikimedia_fixtures(dir.path()), {std::nullopt, 100.0, {1, std::chrono::seconds(1)}},
                       clock);
  kg::WikidataClient wd(http);
  corpus::CorpusClient corpus(http, wd);
  WikimediaBackend backend(wd, corpus, dir / "data", false);

  const auto candidates = backend.search("house");
  EXPECT_EQ(candidates.front().concept_id.str(), "Q3947");
  EXPECT_EQ(backend.resolve(kg::ConceptId::parse("Q3947")).label, "house");
  EXPECT_EQ(backend.children(kg::ConceptId::parse("Q3947")).size(), 3u);
  EXPECT_EQ(backend.parents(kg::ConceptId::parse("Q3947")).size(), 2u);

  const auto cat = backend.resolve(kg::ConceptId::parse("Q146"));
  const auto preview = backend.preview(cat, corpus::Modality::image, 2);
  EXPECT_EQ(preview.items.size(), 2u);
  EXPECT_EQ(preview.thumbnails.size(), 2u);
  EXPECT_TRUE(backend.preview(backend.resolve(kg::ConceptId::parse("Q3947")), corpus::Modality::image, 5).empty);

  DatasetRequest req{cat, {}, corpus::Modality::image, 3, 3, 0};
  EXPECT_THROW(backend.build_dataset(req), Error);  // no negative pool yet
  corpus::NegativePool pool;
  for (int i = 0; i < 10; ++i) {
    pool.items.emplace_back(corpus::ImageRef{"File:n" + std::to_string(i) + ".jpg", kg::ConceptId::parse("Q7"), "u", {}});
  }
  pool.items.emplace_back(corpus::ImageRef{"File:maine.jpg", kg::ConceptId::parse("Q146"), "u", {}});
  corpus::save_pool(pool, pool_path(dir / "data", corpus::Modality::image));
  const auto manifest = io::read_json(backend.build_dataset(req));
  EXPECT_EQ(manifest["achieved"]["positives"], 3);
  EXPECT_EQ(manifest["achieved"]["negatives"], 3);
  for (const auto& n : manifest["negatives"]) EXPECT_EQ(n["source_qid"], "Q7");
}
