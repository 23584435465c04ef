#include <gtest/gtest.h>

#include "cforge/error.hpp"
#include "cforge/http.hpp"
#include "support/support.hpp"

using namespace cforge;
using namespace cforge::net;
using namespace std::chrono_literals;

namespace {

// Replays a fixed sequence of responses and records requested URLs.
class ScriptedTransport : public HttpTransport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> script) : script_(std::move(script)) {}
  HttpResponse get(const std::string& url) override {
    urls.push_back(url);
    if (next_ >= script_.size()) return script_.back();
    return script_[next_++];
  }
  std::vector<std::string> urls;

 private:
  std::vector<HttpResponse> script_;
  std::size_t next_ = 0;
};

}  // namespace

TEST(Url, EncodeDecodeRoundTrip) {
  const std::string text = "SELECT ?item WHERE { wd:Q89 } & ü/+";
  EXPECT_EQ(url_decode(url_encode(text)), text);
  EXPECT_EQ(url_encode("a b"), "a%20b");
  EXPECT_EQ(url_decode("a+b"), "a b");
}

TEST(Url, BuildAndSplit) {
  const auto url = build_url("https://www.wikidata.org/w/api.php", {{"search", "tow truck"}, {"limit", "10"}});
  EXPECT_EQ(url, "https://www.wikidata.org/w/api.php?search=tow%20truck&limit=10");
  const auto parts = split_url(url);
  EXPECT_EQ(parts.scheme_host, "https://www.wikidata.org");
  EXPECT_EQ(parts.path, "/w/api.php");
  ASSERT_EQ(parts.query.size(), 2u);
  EXPECT_EQ(parts.query[0].second, "tow truck");
  EXPECT_THROW(split_url("www.example.org/x"), Error);
}

TEST(Url, CanonicalQueryIgnoresParameterOrder) {
  EXPECT_EQ(canonical_query("https://h/p?b=2&a=1"), canonical_query("https://h/p?a=1&b=2"));
  EXPECT_EQ(endpoint_of("https://h/p?b=2"), "https://h/p");
}

TEST(Fnv1a, KnownVectors) {
  // Published FNV-1a 64-bit test vectors.
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(RateLimiter, SpacesRequestsPerEndpoint) {
  ManualClock clock;
  RateLimiter limiter(clock, 5.0);
  limiter.acquire("https://a/x");
  limiter.acquire("https://a/x");
  limiter.acquire("https://a/x");
  EXPECT_EQ(clock.now(), std::chrono::duration_cast<Clock::Duration>(400ms));
  limiter.acquire("https://b/y");  // other endpoint is not delayed
  EXPECT_EQ(clock.now(), std::chrono::duration_cast<Clock::Duration>(400ms));
  EXPECT_THROW(RateLimiter(clock, 0.0), Error);
}

TEST(HttpCache, StoresOnceAndKeysOnCanonicalQuery) {
  testkit::TempDir dir;
  HttpCache cache(dir.path());
  EXPECT_FALSE(cache.lookup("https://h/p?a=1&b=2"));
  cache.store("https://h/p?a=1&b=2", "first", 0);
  cache.store("https://h/p?b=2&a=1", "second", 1);
  EXPECT_EQ(cache.lookup("https://h/p?b=2&a=1"), "first");
  auto meta = cache.path_for("https://h/p?a=1&b=2");
  EXPECT_TRUE(std::filesystem::exists(meta.replace_extension(".meta.json")));
}

TEST(HttpClient, RetriesTransientFailuresWithBackoff) {
  ManualClock clock;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{503, ""}, {429, ""}, {200, "ok"}});
  HttpClient client(transport, {std::nullopt, 1000.0, {3, 1s}}, clock);
  EXPECT_EQ(client.get("https://h/p"), "ok");
  EXPECT_EQ(transport->urls.size(), 3u);
  EXPECT_GE(clock.now(), std::chrono::duration_cast<Clock::Duration>(3s));  // 1 s + 2 s backoff
}

TEST(HttpClient, GivesUpAfterAttempts) {
  ManualClock clock;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{500, ""}});
  HttpClient client(transport, {std::nullopt, 1000.0, {2, 1s}}, clock);
  try {
    client.get("https://h/p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::upstream);
  }
  EXPECT_EQ(transport->urls.size(), 2u);
}

TEST(HttpClient, NotFoundIsNotRetried) {
  ManualClock clock;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{404, ""}});
  HttpClient client(transport, {}, clock);
  try {
    client.get("https://h/p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_found);
  }
  EXPECT_EQ(transport->urls.size(), 1u);
}

TEST(HttpClient, CacheServesRepeatsAndOfflineReplay) {
  testkit::TempDir dir;
  ManualClock clock;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, "body"}});
  HttpClient online(transport, {dir.path(), 5.0, {}}, clock);
  EXPECT_EQ(online.get("https://h/p?q=1"), "body");
  EXPECT_EQ(online.get("https://h/p?q=1"), "body");
  EXPECT_EQ(transport->urls.size(), 1u);

  HttpClient offline(nullptr, {dir.path(), 5.0, {}}, clock);
  EXPECT_TRUE(offline.offline());
  EXPECT_EQ(offline.get("https://h/p?q=1"), "body");
  EXPECT_THROW(offline.get("https://h/p?q=2"), Error);
}

TEST(HttpClient, BypassSkipsCache) {
  testkit::TempDir dir;
  ManualClock clock;
  auto transport = std::make_shared<ScriptedTransport>(std::vector<HttpResponse>{{200, "a"}, {200, "b"}});
  HttpClient client(transport, {dir.path(), 5.0, {}}, clock);
  EXPECT_EQ(client.get("https://h/r", CacheMode::bypass), "a");
  EXPECT_EQ(client.get("https://h/r", CacheMode::bypass), "b");
}

TEST(FixtureTransport, MatchesRegardlessOfParameterOrder) {
  testkit::TempDir dir;
  auto fixtures = testkit::wikimedia_fixtures(dir.path());
  EXPECT_GT(fixtures->route_count(), 10u);
  const auto url = build_url("https://www.wikidata.org/w/api.php", {{"format", "json"},
                                                                    {"limit", "10"},
                                                                    {"type", "item"},
                                                                    {"uselang", "en"},
                                                                    {"language", "en"},
                                                                    {"search", "apple"},
                                                                    {"action", "wbsearchentities"}});
  EXPECT_EQ(fixtures->get(url).status, 200);
  EXPECT_EQ(fixtures->get("https://www.wikidata.org/w/api.php?search=zzz").status, 404);
}
