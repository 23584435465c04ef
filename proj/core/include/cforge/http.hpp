#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cforge::net {

using Params = std::vector<std::pair<std::string, std::string>>;

std::string url_encode(std::string_view text);
std::string url_decode(std::string_view text);
/// `base` followed by `?k=v&...` with percent-encoded values, in the given order.
std::string build_url(std::string_view base, const Params& params);

struct UrlParts {
  std::string scheme_host;  // "https://www.wikidata.org"
  std::string path;         // "/w/api.php"
  Params query;             // decoded, original order
};
UrlParts split_url(std::string_view url);

/// scheme://host/path; the rate-limiting and cache-partition key.
std::string endpoint_of(std::string_view url);
/// Query parameters sorted by key then value and re-encoded.
std::string canonical_query(std::string_view url);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Issues a single GET. Throws Error(upstream) on connection-level failure;
/// HTTP error statuses are returned, not thrown.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url) = 0;
};

/// Real network transport (cpp-httplib with OpenSSL), follows redirects.
std::shared_ptr<HttpTransport> make_live_transport(std::string user_agent,
                                                   std::chrono::seconds timeout = std::chrono::seconds(60));

/// Serves recorded responses. The directory holds `routes.json`:
/// `{"routes": [{"url": ..., "file": ..., "status": 200}]}`; URLs are matched
/// on endpoint plus canonical query. Unknown URLs yield status 404.
class FixtureTransport : public HttpTransport {
 public:
  explicit FixtureTransport(std::filesystem::path dir);
  HttpResponse get(const std::string& url) override;
  std::size_t route_count() const noexcept { return routes_.size(); }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::pair<int, std::string>> routes_;  // key -> (status, file)
};

class Clock {
 public:
  using Duration = std::chrono::nanoseconds;
  virtual ~Clock() = default;
  virtual Duration now() const = 0;
  virtual void sleep_for(Duration d) = 0;
};

class SystemClock final : public Clock {
 public:
  Duration now() const override;
  void sleep_for(Duration d) override;
  static SystemClock& instance();
};

/// Deterministic clock for tests: sleeping advances time instantly.
class ManualClock final : public Clock {
 public:
  Duration now() const override;
  void sleep_for(Duration d) override;
  void advance(Duration d) { sleep_for(d); }

 private:
  mutable std::mutex mu_;
  Duration now_{0};
};

/// Spaces request issuance per endpoint at no less than 1/R seconds.
class RateLimiter {
 public:
  RateLimiter(Clock& clock, double requests_per_second = 5.0);
  /// Blocks (via the clock) until a request to `endpoint` may be issued.
  void acquire(const std::string& endpoint);
  double rate() const noexcept { return rate_; }

 private:
  Clock& clock_;
  double rate_;
  std::mutex mu_;
  std::map<std::string, Clock::Duration> next_slot_;
};

/// On-disk response cache: `<dir>/<endpoint-hash>/<query-hash>.json` holds the
/// body verbatim, a sibling `.meta.json` records url and timestamp. Entries
/// are written once via temp-file-then-rename and never overwritten.
class HttpCache {
 public:
  explicit HttpCache(std::filesystem::path dir);

  std::filesystem::path path_for(std::string_view url) const;
  std::optional<std::string> lookup(std::string_view url) const;
  void store(std::string_view url, std::string_view body, std::int64_t unix_seconds) const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct RetryPolicy {
  int attempts = 3;
  Clock::Duration initial_backoff = std::chrono::seconds(1);
};

enum class CacheMode { use, bypass };

/// GET with cache, per-endpoint rate limiting and retry of transient failures
/// (connection errors, 429, 5xx). A null transport means offline replay:
/// cache misses fail with Error(upstream).
class HttpClient {
 public:
  struct Options {
    std::optional<std::filesystem::path> cache_dir;
    double requests_per_second = 5.0;
    RetryPolicy retry;
  };

  HttpClient(std::shared_ptr<HttpTransport> transport, Options options, Clock& clock = SystemClock::instance());

  /// Body of a 200 response. Non-200 statuses throw: 404 as Errc::not_found,
  /// anything else as Errc::upstream.
  std::string get(const std::string& url, CacheMode mode = CacheMode::use);
  /// Raw response after retries; never consults or fills the cache.
  HttpResponse fetch(const std::string& url);

  bool offline() const noexcept { return transport_ == nullptr; }
  RateLimiter& limiter() noexcept { return limiter_; }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::optional<HttpCache> cache_;
  RetryPolicy retry_;
  Clock& clock_;
  RateLimiter limiter_;
};

}  // namespace cforge::net
