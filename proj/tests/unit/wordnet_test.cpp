#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "cforge/error.hpp"
#include "cforge/io.hpp"
#include "cforge/wordnet.hpp"
#include "support/support.hpp"

using namespace cforge;
using namespace cforge::kg;

namespace {

const WordNetDb& fixture_db() {
  static const auto db = WordNetDb::load_directory(testkit::fixture_dir() / "wordnet" / "dict");
  return db;
}

bool contains_word(const std::vector<HierarchyEntry>& entries, const std::string& word) {
  for (const auto& e : entries) {
    for (const auto& w : e.record->words()) {
      if (w == word) return true;
    }
  }
  return false;
}

}  // namespace

TEST(WordNetParse, DataLineRoundTrip) {
  const std::string line =
      "00524569 04 n 02 sport 0 athletics 0 003 @ 00431606 n 0000 ~ 00449174 n 0000 ~ 00449541 n 0000 | an active "
      "diversion requiring physical exertion and competition";
  const auto rec = parse_data_line(line);
  EXPECT_EQ(rec.offset, 524569u);
  EXPECT_EQ(rec.lex_filenum, 4);
  ASSERT_EQ(rec.lemmas.size(), 2u);
  EXPECT_EQ(rec.lemmas[1].word, "athletics");
  ASSERT_EQ(rec.pointers.size(), 3u);
  EXPECT_EQ(rec.pointers[0].symbol, "@");
  EXPECT_EQ(rec.gloss, "an active diversion requiring physical exertion and competition");
  EXPECT_EQ(format_data_line(rec), line);
}

TEST(WordNetParse, MalformedLinesAreRejected) {
  EXPECT_THROW(parse_data_line("00524569 04 n zz sport 0 000 | x"), Error);
  EXPECT_THROW(parse_data_line("00524569 04 n 01 sport 0 002 @ 00431606 n 0000 | short pointer list"), Error);
  EXPECT_THROW(parse_data_line(""), Error);
}

TEST(WordNetDb, SportResolvesToNounSynsets) {
  // index.noun: "sport n 7 2 @ ~ 7 2 00524569 00434156 ..."
  const auto senses = fixture_db().lookup("sport", 'n');
  ASSERT_EQ(senses.size(), 7u);
  EXPECT_EQ(senses.front()->offset, 524569u);
  EXPECT_EQ(fixture_db().ref_for(*senses.front()).to_string(), "sport.n.01");
}

TEST(WordNetDb, UnknownLemmaIsEmpty) { EXPECT_TRUE(fixture_db().lookup("qqqq-nonexistent", 'n').empty()); }

TEST(WordNetDb, SpacesAndUnderscoresAreInterchangeable) {
  const auto a = fixture_db().lookup("edible fruit", 'n');
  const auto b = fixture_db().lookup("edible_fruit", 'n');
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_EQ(fixture_db().lookup("Edible Fruit", 'n'), a);
}

TEST(WordNetDb, FruitHyponymsIncludeAppleAndBerry) {
  const auto h = fixture_db().hyponyms(SynsetRef::parse("fruit.n.01"), 2);
  EXPECT_TRUE(contains_word(h, "apple"));
  EXPECT_TRUE(contains_word(h, "berry"));
}

TEST(WordNetDb, ClosureIsMonotoneInDepth) {
  const auto d1 = fixture_db().hyponyms(SynsetRef::parse("sport.n.01"), 1);
  const auto d2 = fixture_db().hyponyms(SynsetRef::parse("sport.n.01"), 2);
  std::set<std::uint32_t> deep;
  for (const auto& e : d2) deep.insert(e.record->offset);
  for (const auto& e : d1) EXPECT_TRUE(deep.contains(e.record->offset));
  EXPECT_GT(d2.size(), d1.size());
}

TEST(WordNetDb, HypernymOfDwellingIsBuilding) {
  const auto up = fixture_db().hypernyms(SynsetRef::parse("house.n.01"), 1);
  EXPECT_TRUE(contains_word(up, "building"));
}

TEST(WordNetDb, EntityHasNoHypernyms) {
  EXPECT_TRUE(fixture_db().hypernyms(SynsetRef::parse("entity.n.01"), 3).empty());
}

TEST(WordNetDb, TwoSingleStepsEqualOneDoubleStep) {
  const auto& db = fixture_db();
  std::set<std::uint32_t> composed;
  for (const auto& e : db.hypernyms(SynsetRef::parse("apple.n.01"), 1)) {
    composed.insert(e.record->offset);
    for (const auto& f : db.hypernyms(*e.record, 1)) composed.insert(f.record->offset);
  }
  std::set<std::uint32_t> direct;
  for (const auto& e : db.hypernyms(SynsetRef::parse("apple.n.01"), 2)) direct.insert(e.record->offset);
  EXPECT_EQ(composed, direct);
}

TEST(WordNetDb, LeafHasNoHyponyms) {
  const auto& db = fixture_db();
  for (const auto* rec : db.all_synsets()) {
    bool leaf = true;
    for (const auto& p : rec->pointers) leaf = leaf && p.symbol != "~" && p.symbol != "~i";
    if (leaf) {
      EXPECT_TRUE(db.hyponyms(*rec, 3).empty());
      return;
    }
  }
  FAIL() << "fixture has no leaf";
}

TEST(WordNetDb, PointerSymmetryOnFixture) {
  const auto& db = fixture_db();
  for (const auto* rec : db.all_synsets()) {
    for (const auto& p : rec->pointers) {
      if (p.symbol != "@" && p.symbol != "~") continue;
      const auto* target = db.find(p.target_offset, p.target_pos);
      ASSERT_NE(target, nullptr);
      const auto inverse = p.symbol == "@" ? "~" : "@";
      bool found = false;
      for (const auto& q : target->pointers) found = found || (q.symbol == inverse && q.target_offset == rec->offset);
      EXPECT_TRUE(found) << rec->offset << " " << p.symbol << " " << p.target_offset;
    }
  }
}

TEST(WordNetDb, GraphFromSynset) {
  const auto g = wordnet_graph(fixture_db(), SynsetRef::parse("sport.n.01"), 1);
  EXPECT_EQ(g.root().synset->to_string(), "sport.n.01");
  EXPECT_EQ(g.size(), 1 + fixture_db().hyponyms(SynsetRef::parse("sport.n.01"), 1).size());
  EXPECT_EQ(g.max_depth(), 1);
}

TEST(WordNetDb, MissingFilesAndDanglingIndexAreErrors) {
  testkit::TempDir dir;
  EXPECT_THROW(WordNetDb::load_directory(dir.path()), Error);
  io::write_atomic(dir / "data.noun", "00000001 03 n 01 thing 0 000 | a thing\n");
  io::write_atomic(dir / "index.noun", "thing n 1 0 1 0 00000002  \n");
  EXPECT_THROW(WordNetDb::load_directory(dir.path()), Error);
}

TEST(WordNetDb, IndexListsDomainPointersByPrefix) {
  // data lines carry ";c" / "-c", index lines only the bare prefix
  testkit::TempDir dir;
  io::write_atomic(dir / "data.noun",
                   "00000001 03 n 01 hood 0 002 @ 00000002 n 0000 ;u 00000002 n 0000 | slang neighborhood\n"
                   "00000002 03 n 01 place 0 001 ~ 00000001 n 0000 | a place\n");
  io::write_atomic(dir / "index.noun", "'hood n 1 2 @ ; 1 0 00000001  \nplace n 1 1 ~ 1 0 00000002  \n");
  const auto db = WordNetDb::load_directory(dir.path());
  EXPECT_EQ(db.lookup("'hood", 'n').size(), 1u);
  io::write_atomic(dir / "index.noun", "'hood n 1 2 @ ;x 1 0 00000001  \n");
  EXPECT_THROW(WordNetDb::load_directory(dir.path()), Error);
}
