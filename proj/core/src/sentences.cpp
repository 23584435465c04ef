#include <cctype>

#include "cforge/corpus.hpp"

namespace cforge::corpus {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

std::string collapse(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c) || c == '\n') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

void split_line(std::string_view line, std::vector<std::string>& out) {
  const auto text = collapse(line);
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_terminal(text[i])) continue;
    const bool at_end = i + 1 == text.size();
    const bool boundary = at_end || (i + 2 < text.size() && text[i + 1] == ' ' &&
                                     std::isupper(static_cast<unsigned char>(text[i + 2])));
    if (!boundary) continue;
    out.push_back(text.substr(start, i + 1 - start));
    start = i + 2;
  }
  if (start < text.size()) out.push_back(text.substr(start));
}

}  // namespace

std::size_t char_length(std::string_view text) {
  std::size_t n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::string strip_reference_markers(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '[') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j > i + 1 && j < text.size() && text[j] == ']') {
        i = j;
        continue;
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  const auto clean = strip_reference_markers(text);
  std::vector<std::string> out;
  std::string_view rest = clean;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    split_line(rest.substr(0, nl), out);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return out;
}

std::vector<SentenceSample> sentences_from_article(std::string_view text, const std::string& article,
                                                   const kg::ConceptId& qid, std::size_t min_chars,
                                                   std::size_t max_chars) {
  std::vector<SentenceSample> out;
  for (auto& sentence : split_sentences(text)) {
    const auto len = char_length(sentence);
    if (len < min_chars || len > max_chars) continue;
    out.push_back({std::move(sentence), article, qid});
  }
  return out;
}

}  // namespace cforge::corpus
