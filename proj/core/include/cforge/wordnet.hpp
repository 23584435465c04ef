#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cforge/kg_model.hpp"

namespace cforge::kg {

struct WordNetPointer {
  std::string symbol;        // "@" hypernym, "~" hyponym, others kept verbatim
  std::uint32_t target_offset = 0;
  char target_pos = 'n';
  std::string source_target = "0000";
};

struct WordNetLemma {
  std::string word;   // as stored, underscores for spaces
  int lex_id = 0;
};

/// One line of a WordNet 3.0 `data.<pos>` file.
struct SynsetRecord {
  std::uint32_t offset = 0;
  int lex_filenum = 0;
  char pos = 'n';     // synset type; 's' satellites are stored as 's'
  std::vector<WordNetLemma> lemmas;
  std::vector<WordNetPointer> pointers;
  std::string frames;  // verb frame tail, verbatim
  std::string gloss;

  std::vector<std::string> words() const;
  /// First lemma with underscores replaced by spaces.
  std::string head_word() const;
};

/// Parses one data-file line. `line_number` is only used in error messages.
SynsetRecord parse_data_line(std::string_view line, std::size_t line_number = 0);
/// Writes a record back in data-file syntax (without trailing newline).
std::string format_data_line(const SynsetRecord& record);

struct HierarchyEntry {
  const SynsetRecord* record = nullptr;
  int depth = 0;
};

/// In-memory lookup over WordNet 3.0 flat files. Only the part-of-speech files
/// that were loaded are available.
class WordNetDb {
 public:
  /// Loads one `index.<pos>` / `data.<pos>` pair. May be called once per pos.
  void load(const std::filesystem::path& index_path, const std::filesystem::path& data_path);

  /// Loads every pos pair found in `dict_dir` (at least index.noun/data.noun).
  static WordNetDb load_directory(const std::filesystem::path& dict_dir);

  /// Synsets for `lemma` in sense order; case-insensitive, spaces and
  /// underscores are interchangeable. Empty when unknown.
  std::vector<const SynsetRecord*> lookup(std::string_view lemma, char pos) const;

  const SynsetRecord& resolve(const SynsetRef& ref) const;
  const SynsetRecord* find(std::uint32_t offset, char pos) const;
  /// Sense reference for a record, based on its head word's sense order.
  SynsetRef ref_for(const SynsetRecord& record) const;

  /// Breadth-first closure over "~" pointers; first depth wins.
  std::vector<HierarchyEntry> hyponyms(const SynsetRef& ref, int depth = 2) const;
  std::vector<HierarchyEntry> hyponyms(const SynsetRecord& record, int depth = 2) const;
  /// Breadth-first closure over "@" pointers.
  std::vector<HierarchyEntry> hypernyms(const SynsetRef& ref, int depth = 1) const;
  std::vector<HierarchyEntry> hypernyms(const SynsetRecord& record, int depth = 1) const;

  std::size_t synset_count() const noexcept { return data_.size(); }
  std::vector<const SynsetRecord*> all_synsets() const;

 private:
  std::vector<HierarchyEntry> closure(const SynsetRecord& start, std::string_view symbol, int depth) const;

  // (normalized lemma, pos) -> offsets in sense order
  std::map<std::pair<std::string, char>, std::vector<std::uint32_t>> index_;
  // (offset, pos) -> record; satellites are keyed under 'a'
  std::map<std::pair<std::uint32_t, char>, SynsetRecord> data_;
};

/// Lowercases and maps spaces to underscores.
std::string normalize_lemma(std::string_view lemma);

/// Builds a concept graph rooted at `ref` with hyponyms down to `depth`.
ConceptGraph wordnet_graph(const WordNetDb& db, const SynsetRef& ref, int depth = 2);

}  // namespace cforge::kg
