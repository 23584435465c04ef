#include "cforge/wordnet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>

#include "cforge/error.hpp"

namespace cforge::kg {

namespace {

class Tokens {
 public:
  Tokens(std::string_view text, std::size_t line_number) : text_(text), line_(line_number) {}

  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }

  std::string_view next(const char* what) {
    skip_space();
    if (pos_ >= text_.size()) fail(std::string("missing ") + what);
    const auto start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ' ') ++pos_;
    return text_.substr(start, pos_ - start);
  }

  template <typename T>
  T number(const char* what, int base = 10) {
    const auto tok = next(what);
    T value{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value, base);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
      fail(std::string("bad ") + what + " '" + std::string(tok) + "'");
    }
    return value;
  }

  std::string_view rest() {
    skip_space();
    return text_.substr(pos_);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::parse, "line " + std::to_string(line_) + ": " + msg);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && text_[pos_] == ' ') ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

const std::set<std::string, std::less<>>& pointer_symbols() {
  static const std::set<std::string, std::less<>> symbols{
      "!", "@", "@i", "~", "~i", "#m", "#s", "#p", "%m", "%s", "%p", "=", "+",
      ";c", "-c", ";r", "-r", ";u", "-u", "*", ">", "&", "<", "\\", "^", "$"};
  return symbols;
}

char canonical_pos(char pos) { return pos == 's' ? 'a' : pos; }

bool valid_pos(char pos) { return pos == 'n' || pos == 'v' || pos == 'a' || pos == 'r' || pos == 's'; }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open WordNet file " + path.string());
  return in;
}

}  // namespace

std::string normalize_lemma(std::string_view lemma) {
  std::string out;
  out.reserve(lemma.size());
  for (unsigned char c : lemma) out.push_back(c == ' ' ? '_' : static_cast<char>(std::tolower(c)));
  return out;
}

std::vector<std::string> SynsetRecord::words() const {
  std::vector<std::string> out;
  out.reserve(lemmas.size());
  for (const auto& l : lemmas) out.push_back(l.word);
  return out;
}

std::string SynsetRecord::head_word() const {
  if (lemmas.empty()) return {};
  auto word = lemmas.front().word;
  std::replace(word.begin(), word.end(), '_', ' ');
  // adjective markers such as "(a)" are part of the stored word
  if (auto paren = word.find('('); paren != std::string::npos) word.erase(paren);
  return word;
}

SynsetRecord parse_data_line(std::string_view line, std::size_t line_number) {
  const auto bar = line.find(" | ");
  const auto body = bar == std::string_view::npos ? line : line.substr(0, bar);
  Tokens tok(body, line_number);
  SynsetRecord rec;
  rec.offset = tok.number<std::uint32_t>("synset offset");
  rec.lex_filenum = tok.number<int>("lex_filenum");
  const auto ss_type = tok.next("ss_type");
  if (ss_type.size() != 1 || !valid_pos(ss_type[0])) tok.fail("bad ss_type '" + std::string(ss_type) + "'");
  rec.pos = ss_type[0];
  const auto w_cnt = tok.number<int>("w_cnt", 16);
  if (w_cnt <= 0) tok.fail("synset without words");
  for (int i = 0; i < w_cnt; ++i) {
    WordNetLemma lemma;
    lemma.word = std::string(tok.next("word"));
    lemma.lex_id = tok.number<int>("lex_id", 16);
    rec.lemmas.push_back(std::move(lemma));
  }
  const auto p_cnt = tok.number<int>("p_cnt");
  for (int i = 0; i < p_cnt; ++i) {
    WordNetPointer ptr;
    ptr.symbol = std::string(tok.next("pointer symbol"));
    if (!pointer_symbols().contains(ptr.symbol)) tok.fail("unknown pointer symbol '" + ptr.symbol + "'");
    ptr.target_offset = tok.number<std::uint32_t>("pointer offset");
    const auto pos = tok.next("pointer pos");
    if (pos.size() != 1 || !valid_pos(pos[0])) tok.fail("bad pointer pos '" + std::string(pos) + "'");
    ptr.target_pos = pos[0];
    ptr.source_target = std::string(tok.next("source/target"));
    if (ptr.source_target.size() != 4) tok.fail("bad source/target '" + ptr.source_target + "'");
    rec.pointers.push_back(std::move(ptr));
  }
  rec.frames = trim(tok.rest());
  if (bar != std::string_view::npos) rec.gloss = trim(line.substr(bar + 3));
  return rec;
}

std::string format_data_line(const SynsetRecord& record) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08u %02d %c %02x", record.offset, record.lex_filenum, record.pos,
                static_cast<unsigned>(record.lemmas.size()));
  std::string out = buf;
  for (const auto& l : record.lemmas) {
    std::snprintf(buf, sizeof buf, " %x", l.lex_id);
    out += " " + l.word + buf;
  }
  std::snprintf(buf, sizeof buf, " %03zu", record.pointers.size());
  out += buf;
  for (const auto& p : record.pointers) {
    std::snprintf(buf, sizeof buf, " %08u %c ", p.target_offset, p.target_pos);
    out += " " + p.symbol + buf + p.source_target;
  }
  if (!record.frames.empty()) out += " " + record.frames;
  out += " | " + record.gloss;
  return out;
}

void WordNetDb::load(const std::filesystem::path& index_path, const std::filesystem::path& data_path) {
  std::map<std::pair<std::uint32_t, char>, SynsetRecord> data;
  {
    auto in = open_or_throw(data_path);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == ' ') continue;  // license header
      auto rec = parse_data_line(line, n);
      const auto key = std::pair{rec.offset, canonical_pos(rec.pos)};
      if (!data.emplace(key, std::move(rec)).second) {
        throw Error(Errc::parse, data_path.string() + ": line " + std::to_string(n) + ": duplicate offset");
      }
    }
  }
  std::map<std::pair<std::string, char>, std::vector<std::uint32_t>> index;
  {
    auto in = open_or_throw(index_path);
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == ' ') continue;
      try {
        Tokens tok(line, n);
        auto lemma = std::string(tok.next("lemma"));
        const auto pos = tok.next("pos");
        if (pos.size() != 1 || !valid_pos(pos[0])) tok.fail("bad pos '" + std::string(pos) + "'");
        const auto synset_cnt = tok.number<int>("synset_cnt");
        const auto p_cnt = tok.number<int>("p_cnt");
        for (int i = 0; i < p_cnt; ++i) {
          const auto sym = tok.next("pointer symbol");
          // index files list domain pointers by their bare ';' / '-' prefix
          if (!pointer_symbols().contains(sym) && sym != ";" && sym != "-") {
            tok.fail("unknown pointer symbol '" + std::string(sym) + "'");
          }
        }
        tok.number<int>("sense_cnt");
        tok.number<int>("tagsense_cnt");
        std::vector<std::uint32_t> offsets;
        for (int i = 0; i < synset_cnt; ++i) {
          const auto off = tok.number<std::uint32_t>("synset offset");
          if (!data.contains({off, canonical_pos(pos[0])})) {
            tok.fail("offset " + std::to_string(off) + " has no data record");
          }
          offsets.push_back(off);
        }
        if (!tok.done()) tok.fail("trailing tokens");
        index[{normalize_lemma(lemma), canonical_pos(pos[0])}] = std::move(offsets);
      } catch (const Error& e) {
        throw Error(e.code(), index_path.string() + ": " + e.what());
      }
    }
  }
  for (auto& [k, v] : data) {
    if (data_.contains(k)) throw Error(Errc::conflict, "pos already loaded from " + data_path.string());
  }
  data_.merge(data);
  for (auto& [k, v] : index) index_[k] = std::move(v);
}

WordNetDb WordNetDb::load_directory(const std::filesystem::path& dict_dir) {
  WordNetDb db;
  bool any = false;
  for (const char* pos : {"noun", "verb", "adj", "adv"}) {
    const auto index = dict_dir / (std::string("index.") + pos);
    const auto data = dict_dir / (std::string("data.") + pos);
    if (std::filesystem::exists(index) && std::filesystem::exists(data)) {
      db.load(index, data);
      any = true;
    }
  }
  if (!any) throw Error(Errc::io, "no WordNet index/data files in " + dict_dir.string());
  return db;
}

std::vector<const SynsetRecord*> WordNetDb::lookup(std::string_view lemma, char pos) const {
  std::vector<const SynsetRecord*> out;
  auto it = index_.find({normalize_lemma(lemma), canonical_pos(pos)});
  if (it == index_.end()) return out;
  for (auto off : it->second) out.push_back(&data_.at({off, canonical_pos(pos)}));
  return out;
}

const SynsetRecord* WordNetDb::find(std::uint32_t offset, char pos) const {
  auto it = data_.find({offset, canonical_pos(pos)});
  return it == data_.end() ? nullptr : &it->second;
}

const SynsetRecord& WordNetDb::resolve(const SynsetRef& ref) const {
  const auto senses = lookup(ref.lemma, ref.pos);
  if (ref.sense < 1 || static_cast<std::size_t>(ref.sense) > senses.size()) {
    throw Error(Errc::not_found, "synset " + ref.to_string() + " not in WordNet");
  }
  return *senses[static_cast<std::size_t>(ref.sense - 1)];
}

SynsetRef WordNetDb::ref_for(const SynsetRecord& record) const {
  const auto lemma = normalize_lemma(record.lemmas.front().word);
  auto word = lemma.substr(0, lemma.find('('));
  const auto senses = lookup(word, record.pos);
  for (std::size_t i = 0; i < senses.size(); ++i) {
    if (senses[i] == &record) return SynsetRef{word, canonical_pos(record.pos), static_cast<int>(i + 1)};
  }
  throw Error(Errc::not_found, "synset " + std::to_string(record.offset) + " missing from index");
}

std::vector<HierarchyEntry> WordNetDb::closure(const SynsetRecord& start, std::string_view symbol,
                                               int depth) const {
  if (depth < 1) throw Error(Errc::invalid_argument, "closure depth must be >= 1");
  std::vector<HierarchyEntry> out;
  std::set<const SynsetRecord*> seen{&start};
  std::deque<HierarchyEntry> queue{{&start, 0}};
  while (!queue.empty()) {
    const auto current = queue.front();
    queue.pop_front();
    if (current.depth == depth) continue;
    for (const auto& p : current.record->pointers) {
      if (p.symbol != symbol) continue;
      const auto* target = find(p.target_offset, p.target_pos);
      if (target == nullptr) continue;
      if (seen.insert(target).second) {
        HierarchyEntry entry{target, current.depth + 1};
        out.push_back(entry);
        queue.push_back(entry);
      }
    }
  }
  return out;
}

std::vector<HierarchyEntry> WordNetDb::hyponyms(const SynsetRef& ref, int depth) const {
  return closure(resolve(ref), "~", depth);
}

std::vector<HierarchyEntry> WordNetDb::hyponyms(const SynsetRecord& record, int depth) const {
  return closure(record, "~", depth);
}

std::vector<HierarchyEntry> WordNetDb::hypernyms(const SynsetRef& ref, int depth) const {
  return closure(resolve(ref), "@", depth);
}

std::vector<HierarchyEntry> WordNetDb::hypernyms(const SynsetRecord& record, int depth) const {
  return closure(record, "@", depth);
}

std::vector<const SynsetRecord*> WordNetDb::all_synsets() const {
  std::vector<const SynsetRecord*> out;
  out.reserve(data_.size());
  for (const auto& [k, rec] : data_) out.push_back(&rec);
  return out;
}

ConceptGraph wordnet_graph(const WordNetDb& db, const SynsetRef& ref, int depth) {
  const auto& root_rec = db.resolve(ref);
  auto node_for = [&](const SynsetRecord& rec, int d) {
    ConceptNode node;
    node.label = rec.head_word();
    node.synset = db.ref_for(rec);
    node.description = rec.gloss;
    node.depth = d;
    return node;
  };
  ConceptGraph graph(node_for(root_rec, 0));
  std::vector<const SynsetRecord*> frontier{&root_rec};
  std::set<const SynsetRecord*> seen{&root_rec};
  for (int d = 1; d <= depth && !frontier.empty(); ++d) {
    std::vector<const SynsetRecord*> next;
    for (const auto* parent : frontier) {
      std::vector<ConceptNode> children;
      for (const auto& entry : db.hyponyms(*parent, 1)) {
        if (seen.insert(entry.record).second) {
          children.push_back(node_for(*entry.record, d));
          next.push_back(entry.record);
        }
      }
      if (!children.empty()) graph = add_subtree(graph, node_for(*parent, d - 1).key(), children, "hyponym");
    }
    frontier = std::move(next);
  }
  return graph;
}

}  // namespace cforge::kg
