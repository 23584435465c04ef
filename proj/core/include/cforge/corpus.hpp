#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cforge/http.hpp"
#include "cforge/kg_model.hpp"
#include "cforge/wikidata.hpp"

namespace cforge::corpus {

enum class Modality { image, text };

std::string_view to_string(Modality m) noexcept;
Modality parse_modality(std::string_view text);

struct ImageRef {
  std::string title;  // "File:Foo bar.jpg"
  kg::ConceptId source_qid;
  std::string url;    // original file URL
  std::optional<std::filesystem::path> local_path;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct SentenceSample {
  std::string text;
  std::string source_article;
  kg::ConceptId source_qid;

  friend bool operator==(const SentenceSample&, const SentenceSample&) = default;
};

using Sample = std::variant<ImageRef, SentenceSample>;

/// Source identity used for deduplication: file title or sentence text.
std::string identity(const Sample& sample);
const kg::ConceptId& source_qid(const Sample& sample);
nlohmann::json to_json(const Sample& sample);
Sample sample_from_json(const nlohmann::json& doc);

inline constexpr std::size_t kMinSentenceChars = 50;
inline constexpr std::size_t kMaxSentenceChars = 500;

/// Number of UTF-8 code points.
std::size_t char_length(std::string_view text);

/// Removes numeric reference markers such as "[12]".
std::string strip_reference_markers(std::string_view text);

/// Splits on '.', '!' or '?' followed by whitespace and an uppercase letter,
/// or by end of text. Lines are split independently; whitespace is collapsed.
std::vector<std::string> split_sentences(std::string_view text);

/// split_sentences + length filter, tagged with provenance.
std::vector<SentenceSample> sentences_from_article(std::string_view text, const std::string& article,
                                                   const kg::ConceptId& qid,
                                                   std::size_t min_chars = kMinSentenceChars,
                                                   std::size_t max_chars = kMaxSentenceChars);

struct Manifest {
  std::string concept_key;
  std::vector<std::string> qids;  // main concept first, then included sub-concepts
  Modality modality = Modality::image;
  std::uint64_t seed = 0;
  std::size_t requested_pos = 0;
  std::size_t requested_neg = 0;
  std::size_t achieved_pos = 0;
  std::size_t achieved_neg = 0;
  bool balance_downgraded = false;
  std::size_t candidate_pos = 0;
  std::size_t candidate_neg = 0;
  nlohmann::json query = nlohmann::json::object();
  std::string created_at;
};

struct ConceptDataset {
  kg::ConceptNode concept_node;
  Modality modality = Modality::image;
  std::vector<Sample> positives;
  std::vector<Sample> negatives;
  Manifest manifest;
  // Deduplicated candidate pools the members were drawn from.
  std::vector<Sample> candidate_positives;
  std::vector<Sample> candidate_negatives;
};

struct AssembleOptions {
  std::size_t n_pos = 200;
  std::size_t n_neg = 200;
  std::uint64_t seed = 0;
};

/// Draws a balanced dataset from candidate pools. Candidates are deduplicated
/// by identity and negatives sharing an identity with a positive are dropped.
/// A balanced request that cannot be met is downgraded to the smaller class
/// size and flagged in the manifest.
ConceptDataset assemble_dataset(const kg::ConceptNode& node, Modality modality, std::vector<Sample> positives,
                                std::vector<Sample> negatives, const AssembleOptions& options);

/// Re-runs assemble_dataset from the dataset's own candidates and seed.
ConceptDataset reassemble(const ConceptDataset& dataset);

/// `<data>/<qid>/<modality>/`
std::filesystem::path dataset_dir(const std::filesystem::path& data_root, const kg::ConceptNode& node,
                                  Modality modality);
/// Writes manifest.json, candidates.jsonl and (text) sentences.jsonl.
/// Returns the manifest path.
std::filesystem::path save_dataset(const ConceptDataset& dataset, const std::filesystem::path& data_root);
ConceptDataset load_dataset(const std::filesystem::path& manifest_path);

/// Pre-built pool of unrelated samples for negatives.
struct NegativePool {
  Modality modality = Modality::image;
  std::vector<Sample> items;
  nlohmann::json manifest = nlohmann::json::object();
};

void save_pool(const NegativePool& pool, const std::filesystem::path& path);
NegativePool load_pool(const std::filesystem::path& path);

/// `n` pool items whose source QID is not in `exclude`, uniformly at random.
/// Throws when fewer than `n` remain after exclusion.
std::vector<Sample> sample_negatives(const NegativePool& pool, std::size_t n,
                                     const std::set<std::string>& exclude, std::uint64_t seed);

inline constexpr std::string_view kCommonsSparql = "https://commons-query.wikimedia.org/sparql";
inline constexpr std::string_view kWikipediaApi = "https://en.wikipedia.org/w/api.php";
inline constexpr std::string_view kCommonsFilePath = "https://commons.wikimedia.org/wiki/Special:FilePath/";

/// Files whose P180 value is `id` or anything reaching it through P31?/P279*.
std::string commons_depicts_query(const kg::ConceptId& id);
/// Items (and their English articles) reaching `id` through P31?/P279*.
std::string subclass_articles_query(const kg::ConceptId& id);

std::vector<ImageRef> parse_commons_bindings(std::string_view body);
/// Width-constrained thumbnail URL for a Commons file title.
std::string thumbnail_url(std::string_view title, int width, std::string_view base = kCommonsFilePath);
/// Plain-text extract of one page from an action=query&prop=extracts response.
std::optional<std::string> parse_extract(std::string_view body);

struct DownloadFailure {
  std::string title;
  std::string reason;
};

struct DownloadReport {
  std::vector<ImageRef> downloaded;
  std::vector<DownloadFailure> failures;
};

struct SentenceOptions {
  std::size_t min_chars = kMinSentenceChars;
  std::size_t max_chars = kMaxSentenceChars;
  std::size_t target = 200;
  std::uint64_t seed = 0;
  std::size_t max_supplement_articles = 200;
};

struct Endpoints {
  std::string commons_sparql = std::string(kCommonsSparql);
  std::string wikipedia_api = std::string(kWikipediaApi);
  std::string commons_file_path = std::string(kCommonsFilePath);
};

/// Retrieval against Wikimedia Commons and Wikipedia.
class CorpusClient {
 public:
  CorpusClient(net::HttpClient& http, kg::WikidataClient& wikidata, Endpoints endpoints = {});

  std::vector<ImageRef> commons_image_query(const kg::ConceptId& id);

  /// Fetches each distinct title at `max_edge_px` width into `dest` using
  /// `workers` threads. Throws only when every download of a non-empty batch
  /// fails.
  DownloadReport download_images(const std::vector<ImageRef>& refs, const std::filesystem::path& dest,
                                 int max_edge_px = 640, int workers = 4);

  /// Sentences of the concept's article, topped up with random sentences from
  /// subclass articles when fewer than `target` survive the length filter.
  std::vector<SentenceSample> wikipedia_sentences(const kg::ConceptId& id, const SentenceOptions& options = {});

  std::optional<std::string> article_text(const std::string& title);

  /// Random images depicting the given unrelated concepts.
  NegativePool build_image_pool(const std::vector<kg::ConceptId>& unrelated, std::size_t per_concept,
                                std::uint64_t seed);
  /// Sentences from `n_articles` random Wikipedia articles (intro sections).
  NegativePool build_text_pool(std::size_t n_articles, std::uint64_t seed, const SentenceOptions& options = {});

 private:
  net::HttpClient& http_;
  kg::WikidataClient& wikidata_;
  Endpoints endpoints_;
};

}  // namespace cforge::corpus
