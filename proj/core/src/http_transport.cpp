#include <httplib.h>

#include "cforge/error.hpp"
#include "cforge/http.hpp"

namespace cforge::net {

namespace {

class LiveTransport final : public HttpTransport {
 public:
  LiveTransport(std::string user_agent, std::chrono::seconds timeout)
      : user_agent_(std::move(user_agent)), timeout_(timeout) {}

  HttpResponse get(const std::string& url) override {
    const auto parts = split_url(url);
    const auto query_start = url.find('?');
    const auto target = parts.path + (query_start == std::string::npos ? "" : url.substr(query_start));
    httplib::Client client(parts.scheme_host);
    client.set_follow_location(true);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    const httplib::Headers headers{{"User-Agent", user_agent_}, {"Accept", "application/json, */*"}};
    auto result = client.Get(target, headers);
    if (!result) {
      throw Error(Errc::upstream, "GET " + url + ": " + httplib::to_string(result.error()));
    }
    return {result->status, result->body};
  }

 private:
  std::string user_agent_;
  std::chrono::seconds timeout_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_live_transport(std::string user_agent, std::chrono::seconds timeout) {
  return std::make_shared<LiveTransport>(std::move(user_agent), timeout);
}

}  // namespace cforge::net
