#include "cforge/http.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cforge/error.hpp"
#include "cforge/io.hpp"

namespace cforge::net {

namespace fs = std::filesystem;

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size() * 3);
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string url_decode(std::string_view text) {
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      const int hi = hex(text[i + 1]);
      const int lo = hex(text[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(text[i] == '+' ? ' ' : text[i]);
  }
  return out;
}

std::string build_url(std::string_view base, const Params& params) {
  std::string url(base);
  char sep = url.find('?') == std::string::npos ? '?' : '&';
  for (const auto& [k, v] : params) {
    url += sep;
    url += url_encode(k);
    url += '=';
    url += url_encode(v);
    sep = '&';
  }
  return url;
}

UrlParts split_url(std::string_view url) {
  UrlParts parts;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(Errc::invalid_argument, "not an absolute URL: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  const auto query_start = url.find('?');
  const auto host_end = std::min(path_start, query_start);
  parts.scheme_host = std::string(url.substr(0, host_end));
  if (host_end == std::string_view::npos) {
    parts.path = "/";
    return parts;
  }
  parts.path = query_start == std::string_view::npos ? std::string(url.substr(host_end))
                                                     : std::string(url.substr(host_end, query_start - host_end));
  if (parts.path.empty()) parts.path = "/";
  if (query_start == std::string_view::npos) return parts;
  auto query = url.substr(query_start + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto item = query.substr(0, amp);
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        parts.query.emplace_back(url_decode(item), "");
      } else {
        parts.query.emplace_back(url_decode(item.substr(0, eq)), url_decode(item.substr(eq + 1)));
      }
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return parts;
}

std::string endpoint_of(std::string_view url) {
  const auto parts = split_url(url);
  return parts.scheme_host + parts.path;
}

std::string canonical_query(std::string_view url) {
  auto params = split_url(url).query;
  std::stable_sort(params.begin(), params.end());
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out += '&';
    out += url_encode(k) + "=" + url_encode(v);
  }
  return out;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string route_key(std::string_view url) { return endpoint_of(url) + "?" + canonical_query(url); }

}  // namespace

FixtureTransport::FixtureTransport(fs::path dir) : dir_(std::move(dir)) {
  const auto doc = nlohmann::json::parse(io::read_file(dir_ / "routes.json"));
  for (const auto& r : doc.at("routes")) {
    routes_[route_key(r.at("url").get<std::string>())] = {r.value("status", 200), r.at("file").get<std::string>()};
  }
}

HttpResponse FixtureTransport::get(const std::string& url) {
  auto it = routes_.find(route_key(url));
  if (it == routes_.end()) return {404, "no fixture for " + url};
  return {it->second.first, io::read_file(dir_ / it->second.second)};
}

Clock::Duration SystemClock::now() const {
  return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now().time_since_epoch());
}

void SystemClock::sleep_for(Duration d) {
  if (d > Duration::zero()) std::this_thread::sleep_for(d);
}

SystemClock& SystemClock::instance() {
  static SystemClock clock;
  return clock;
}

Clock::Duration ManualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_for(Duration d) {
  std::lock_guard lock(mu_);
  if (d > Duration::zero()) now_ += d;
}

RateLimiter::RateLimiter(Clock& clock, double requests_per_second) : clock_(clock), rate_(requests_per_second) {
  if (!(rate_ > 0)) throw Error(Errc::invalid_argument, "rate limit must be positive");
}

void RateLimiter::acquire(const std::string& endpoint) {
  const auto interval = std::chrono::duration_cast<Clock::Duration>(std::chrono::duration<double>(1.0 / rate_));
  Clock::Duration slot;
  {
    std::lock_guard lock(mu_);
    const auto now = clock_.now();
    auto& next = next_slot_[endpoint];
    slot = std::max(now, next);
    next = slot + interval;
  }
  clock_.sleep_for(slot - clock_.now());
}

HttpCache::HttpCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path HttpCache::path_for(std::string_view url) const {
  return dir_ / fnv1a_hex(endpoint_of(url)) / (fnv1a_hex(canonical_query(url)) + ".json");
}

std::optional<std::string> HttpCache::lookup(std::string_view url) const {
  const auto path = path_for(url);
  if (!fs::exists(path)) return std::nullopt;
  return io::read_file(path);
}

void HttpCache::store(std::string_view url, std::string_view body, std::int64_t unix_seconds) const {
  const auto path = path_for(url);
  if (fs::exists(path)) return;
  nlohmann::json meta{{"url", std::string(url)}, {"timestamp", unix_seconds}};
  io::write_atomic(path, body);
  auto meta_path = path;
  meta_path.replace_extension(".meta.json");
  io::write_atomic(meta_path, meta.dump(2));
}

HttpClient::HttpClient(std::shared_ptr<HttpTransport> transport, Options options, Clock& clock)
    : transport_(std::move(transport)),
      retry_(options.retry),
      clock_(clock),
      limiter_(clock, options.requests_per_second) {
  if (options.cache_dir) cache_.emplace(*options.cache_dir);
  if (retry_.attempts < 1) throw Error(Errc::invalid_argument, "retry attempts must be >= 1");
}

HttpResponse HttpClient::fetch(const std::string& url) {
  if (!transport_) throw Error(Errc::upstream, "offline: no cached response for " + url);
  const auto endpoint = endpoint_of(url);
  auto backoff = retry_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    limiter_.acquire(endpoint);
    try {
      auto response = transport_->get(url);
      if (response.status != 429 && response.status < 500) return response;
      last_error = "HTTP " + std::to_string(response.status);
    } catch (const Error& e) {
      if (e.code() != Errc::upstream) throw;
      last_error = e.what();
    }
    if (attempt < retry_.attempts) {
      spdlog::warn("GET {} failed ({}), retry {}/{}", url, last_error, attempt, retry_.attempts - 1);
      clock_.sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(Errc::upstream, "GET " + url + " failed after " + std::to_string(retry_.attempts) +
                                  " attempts: " + last_error);
}

std::string HttpClient::get(const std::string& url, CacheMode mode) {
  if (mode == CacheMode::use && cache_) {
    if (auto hit = cache_->lookup(url)) return *std::move(hit);
  }
  auto response = fetch(url);
  if (response.status == 404) throw Error(Errc::not_found, "HTTP 404 for " + url);
  if (response.status != 200) {
    throw Error(Errc::upstream, "HTTP " + std::to_string(response.status) + " for " + url);
  }
  if (mode == CacheMode::use && cache_) {
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    cache_->store(url, response.body, now);
  }
  return std::move(response.body);
}

}  // namespace cforge::net
