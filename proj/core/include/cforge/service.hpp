#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cforge/corpus.hpp"
#include "cforge/error.hpp"
#include "cforge/kg_model.hpp"
#include "cforge/wikidata.hpp"

namespace cforge::service {

inline constexpr std::size_t kPreviewLimit = 12;
inline constexpr int kDefaultPort = 8931;

struct PendingChoice {
  std::string label;
  std::vector<kg::DisambiguationCandidate> candidates;
  std::optional<kg::ConceptId> selected;
  bool skipped = false;
};

struct StoredResponse {
  int status = 200;
  nlohmann::json body;
};

struct Session {
  std::string id;
  std::string query;
  corpus::Modality modality = corpus::Modality::image;
  std::vector<kg::DisambiguationCandidate> candidates;
  std::optional<kg::ConceptNode> current;
  std::vector<kg::ConceptNode> history;  // append-only
  std::vector<PendingChoice> pending;
  bool committed = false;
  std::optional<std::string> manifest_path;
  std::optional<std::string> creation_key;
  std::map<std::string, StoredResponse> replies;  // idempotency key -> first reply
  std::string created_at;
  std::string updated_at;
};

nlohmann::json to_json(const Session& session);
Session session_from_json(const nlohmann::json& doc);

struct Preview {
  std::vector<corpus::Sample> items;
  std::vector<std::string> thumbnails;  // parallel to items for images
  bool empty = false;
};

struct DatasetRequest {
  kg::ConceptNode node;
  std::vector<kg::ConceptId> subconcepts;
  corpus::Modality modality = corpus::Modality::image;
  std::size_t n_pos = 200;
  std::size_t n_neg = 200;
  std::uint64_t seed = 0;
};

/// KG and corpus operations behind the concept-definition loop.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::vector<kg::DisambiguationCandidate> search(const std::string& query) = 0;
  virtual kg::ConceptNode resolve(const kg::ConceptId& id) = 0;
  virtual std::vector<kg::ConceptNode> children(const kg::ConceptId& id) = 0;
  virtual std::vector<kg::ConceptNode> parents(const kg::ConceptId& id) = 0;
  virtual Preview preview(const kg::ConceptNode& node, corpus::Modality modality, std::size_t limit) = 0;
  /// Retrieves, assembles and saves a dataset; returns the manifest path.
  virtual std::filesystem::path build_dataset(const DatasetRequest& request) = 0;
};

/// Wikidata for the hierarchy, Commons/Wikipedia for data, a pre-built
/// negative pool at `<data>/pools/<modality>.json`.
class WikimediaBackend : public Backend {
 public:
  WikimediaBackend(kg::WikidataClient& wikidata, corpus::CorpusClient& corpus, std::filesystem::path data_dir,
                   bool download_images = true);

  std::vector<kg::DisambiguationCandidate> search(const std::string& query) override;
  kg::ConceptNode resolve(const kg::ConceptId& id) override;
  std::vector<kg::ConceptNode> children(const kg::ConceptId& id) override;
  std::vector<kg::ConceptNode> parents(const kg::ConceptId& id) override;
  Preview preview(const kg::ConceptNode& node, corpus::Modality modality, std::size_t limit) override;
  std::filesystem::path build_dataset(const DatasetRequest& request) override;

 private:
  kg::WikidataClient& wikidata_;
  corpus::CorpusClient& corpus_;
  std::filesystem::path data_dir_;
  bool download_images_;
};

std::filesystem::path pool_path(const std::filesystem::path& data_dir, corpus::Modality modality);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
  std::optional<std::string> raw;  // served verbatim when set
};

struct ServiceOptions {
  std::filesystem::path data_dir;
  std::filesystem::path runs_dir;  // defaults to <data>/runs
  std::size_t preview_limit = kPreviewLimit;
};

/// Transport-independent request handling. Sessions persist as JSON under
/// `<data>/sessions/`; operations on one session are serialized.
class Service {
 public:
  Service(Backend& backend, ServiceOptions options);

  ApiResponse create_session(const nlohmann::json& body, const std::optional<std::string>& idempotency_key = {});
  ApiResponse select(const std::string& id, const nlohmann::json& body,
                     const std::optional<std::string>& idempotency_key = {});
  ApiResponse navigate(const std::string& id, const nlohmann::json& body,
                       const std::optional<std::string>& idempotency_key = {});
  ApiResponse commit(const std::string& id, const nlohmann::json& body,
                     const std::optional<std::string>& idempotency_key = {});
  ApiResponse get_session(const std::string& id);
  ApiResponse list_datasets();
  ApiResponse list_runs();
  ApiResponse run_report(const std::string& run_id);

  const ServiceOptions& options() const noexcept { return options_; }

 private:
  struct Entry {
    std::mutex mu;
    Session session;
  };

  std::shared_ptr<Entry> find(const std::string& id);
  void persist(const Session& session) const;
  template <typename Fn>
  ApiResponse mutate(const std::string& id, const std::optional<std::string>& key, Fn&& fn);

  Backend& backend_;
  ServiceOptions options_;
  std::mutex mu_;  // guards sessions_ and creation_keys_
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, std::string> creation_keys_;
};

/// Error -> HTTP status: invalid_argument/parse 400, not_found 404,
/// conflict 409, upstream 502, everything else 500.
int http_status(Errc code) noexcept;
ApiResponse error_response(const std::exception& e);

/// cpp-httplib front end serving `/api/v1` and an optional static UI directory.
class HttpServer {
 public:
  explicit HttpServer(Service& service, std::optional<std::filesystem::path> static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cforge::service
