#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "test_util.hpp"
#include "uzlm/corpus.hpp"
#include "uzlm/rng.hpp"
#include "uzlm/unicode.hpp"

using namespace uzlm;
using corpus::Document;

TEST_CASE("normalize_text lowercases and collapses whitespace") {
  CHECK(corpus::normalize_text("Салом  Дунё ") == "салом дунё");
  CHECK(corpus::normalize_text("Ўзбекистон") == "ўзбекистон");
  CHECK(corpus::normalize_text("менинг") == "менинг");
  CHECK(corpus::normalize_text("a\tb\nc") == "a b c");
  CHECK(corpus::normalize_text("") == "");
  CHECK(corpus::normalize_text("  \t\n ") == "");
}

TEST_CASE("normalize_text removes control characters") {
  CHECK(corpus::normalize_text("аб\x01вг") == "абвг");
  CHECK(corpus::normalize_text(std::string("а\x7f") + "б") == "аб");
}

TEST_CASE("normalize_text recomposes to NFC") {
  // Decomposed Cyrillic: и + combining breve, Е + combining diaeresis.
  CHECK(corpus::normalize_text("и\xcc\x86") == "й");
  CHECK(corpus::normalize_text("Е\xcc\x88") == "ё");
}

TEST_CASE("normalize_text rejects invalid UTF-8 with its byte offset") {
  try {
    corpus::normalize_text(std::string("ab\xff") + "cd");
    FAIL("expected Utf8Error");
  } catch (const unicode::Utf8Error& e) {
    CHECK(e.byte_offset() == 2);
  }
  // Truncated two-byte sequence.
  try {
    corpus::normalize_text("salom \xd1");
    FAIL("expected Utf8Error");
  } catch (const unicode::Utf8Error& e) {
    CHECK(e.byte_offset() == 6);
  }
}

TEST_CASE("normalize_text is idempotent") {
  const std::vector<std::string> samples = {
      "Салом  Дунё ", "Ўзбекистон", "и\xcc\x86", "a\tb\nc", "Қани?! Кетдик.",
      "бу — тире ва 123 сон", "ТОШКЕНТ Ш. МАРКАЗИ"};
  for (const auto& s : samples) {
    const std::string once = corpus::normalize_text(s);
    CHECK(corpus::normalize_text(once) == once);
  }

  Rng rng(7);
  const std::vector<std::string> alphabet = {"а", "Б", "ў", "Қ", "z", "9", ".", " ", "\t", "!"};
  for (int i = 0; i < 500; ++i) {
    std::string s;
    const int len = 1 + static_cast<int>(rng.uniform_int(30));
    for (int j = 0; j < len; ++j) s += alphabet[rng.uniform_int(alphabet.size())];
    const std::string once = corpus::normalize_text(s);
    CHECK(corpus::normalize_text(once) == once);
  }
}

namespace {

// Independent word counter: stream extraction over ASCII whitespace.
int64_t stream_count(const std::string& text) {
  std::istringstream in(text);
  std::string w;
  int64_t n = 0;
  while (in >> w) ++n;
  return n;
}

}  // namespace

TEST_CASE("count_words matches wc -w semantics") {
  CHECK(corpus::count_words("бу уй") == 2);
  CHECK(corpus::count_words("") == 0);
  CHECK(corpus::count_words("   ") == 0);
  CHECK(corpus::count_words(" сўз ") == 1);
  CHECK(corpus::count_words("a  b\t\tc\nd") == 4);

  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const int pieces = static_cast<int>(rng.uniform_int(12));
    for (int j = 0; j < pieces; ++j) {
      for (uint64_t k = rng.uniform_int(3); k > 0; --k) {
        s += (rng.uniform_int(3) == 0) ? '\t' : ' ';
      }
      const int len = static_cast<int>(rng.uniform_int(6));
      for (int k = 0; k < len; ++k) s += static_cast<char>('a' + rng.uniform_int(26));
    }
    CHECK(corpus::count_words(s) == stream_count(s));
  }
}

TEST_CASE("split_sentences cuts at terminators followed by whitespace") {
  const std::set<std::string> abbrevs = corpus::default_abbreviations();
  CHECK(corpus::split_sentences("бу уй. бу боғ.", abbrevs) ==
        std::vector<std::string>{"бу уй.", "бу боғ."});
  CHECK(corpus::split_sentences("қани?! кетдик.", abbrevs) ==
        std::vector<std::string>{"қани?!", "кетдик."});
  CHECK(corpus::split_sentences("терминатор йўқ", abbrevs) ==
        std::vector<std::string>{"терминатор йўқ"});
  CHECK(corpus::split_sentences("", abbrevs).empty());
}

TEST_CASE("split_sentences respects abbreviations") {
  const std::set<std::string> abbrevs = {"ш.", "й."};
  CHECK(corpus::split_sentences("тошкент ш. марказида жойлашган.", abbrevs) ==
        std::vector<std::string>{"тошкент ш. марказида жойлашган."});
  CHECK(corpus::split_sentences("2020 й. кузида келди. у кетди.", abbrevs) ==
        std::vector<std::string>{"2020 й. кузида келди.", "у кетди."});
  // Without the abbreviation entry the same dot splits.
  CHECK(corpus::split_sentences("тошкент ш. марказида жойлашган.", {}).size() == 2);
}

TEST_CASE("split_sentences preserves content") {
  const std::set<std::string> abbrevs = corpus::default_abbreviations();
  const std::vector<std::string> texts = {
      "бу уй. бу боғ.", "қани?! кетдик.", "тошкент ш. маркази.",
      "бир! икки? уч. тўрт"};
  for (const auto& text : texts) {
    const auto sentences = corpus::split_sentences(corpus::normalize_text(text), abbrevs);
    std::string joined;
    for (const auto& s : sentences) {
      CHECK(corpus::count_words(s) >= 1);
      if (!joined.empty()) joined += ' ';
      joined += s;
    }
    CHECK(corpus::normalize_text(joined) == corpus::normalize_text(text));
  }
}

namespace {

std::vector<Document> make_docs(int n, int words_each) {
  std::vector<Document> docs;
  for (int i = 0; i < n; ++i) {
    std::string text;
    for (int w = 0; w < words_each; ++w) {
      if (!text.empty()) text += ' ';
      text += "сўз" + std::to_string(i);
    }
    docs.push_back({"doc" + std::to_string(i), text, "test"});
  }
  return docs;
}

}  // namespace

TEST_CASE("split_corpus with fraction 0 keeps everything in train") {
  const auto docs = make_docs(100, 3);
  const auto [train, val] = corpus::split_corpus(docs, {0.0, 1});
  CHECK(train.size() == 100);
  CHECK(val.empty());
}

TEST_CASE("split_corpus is deterministic and a partition") {
  const auto docs = make_docs(10, 4);
  corpus::SplitSpec spec{0.2, 99};
  const auto [train1, val1] = corpus::split_corpus(docs, spec);
  const auto [train2, val2] = corpus::split_corpus(docs, spec);
  CHECK(val1.size() == 2);  // 10 equal docs at fraction 0.2
  REQUIRE(val1.size() == val2.size());
  for (size_t i = 0; i < val1.size(); ++i) CHECK(val1[i].id == val2[i].id);

  std::set<std::string> ids;
  for (const auto& d : train1) ids.insert(d.id);
  for (const auto& d : val1) ids.insert(d.id);
  CHECK(ids.size() == docs.size());

  // A different seed moves different documents into validation eventually.
  bool any_difference = false;
  for (uint64_t seed = 0; seed < 20 && !any_difference; ++seed) {
    const auto [t, v] = corpus::split_corpus(docs, {0.2, seed});
    if (v.size() != val1.size() || v[0].id != val1[0].id) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("split_corpus validation share tracks the fraction") {
  Rng rng(5);
  std::vector<Document> docs;
  int64_t total = 0;
  for (int i = 0; i < 120; ++i) {
    const int words = 5 + static_cast<int>(rng.uniform_int(20));
    total += words;
    std::string text;
    for (int w = 0; w < words; ++w) text += (w ? " w" : "w");
    docs.push_back({"d" + std::to_string(i), text, "t"});
  }
  const double fraction = 0.1;
  const auto [train, val] = corpus::split_corpus(docs, {fraction, 3});
  int64_t val_words = 0;
  for (const auto& d : val) val_words += corpus::count_words(d.text);
  const double share = static_cast<double>(val_words) / static_cast<double>(total);
  CHECK(share >= fraction * 0.75);
  CHECK(share <= fraction * 1.25);
}

TEST_CASE("split_corpus rejects bad input") {
  CHECK_THROWS_AS(corpus::split_corpus({}, {0.1, 1}), std::invalid_argument);
  const auto docs = make_docs(3, 2);
  CHECK_THROWS_AS(corpus::split_corpus(docs, {1.0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(corpus::split_corpus(docs, {-0.1, 1}), std::invalid_argument);
}

TEST_CASE("corpus_stats sums whitespace-delimited words per source") {
  std::vector<Document> docs = {
      {"a", "бир икки уч тўрт", "news"},
      {"b", "бир икки уч тўрт беш", "news"},
      {"c", "а б в г д е", "wiki"},
  };
  const auto stats = corpus::corpus_stats(docs);
  CHECK(stats.document_count == 3);
  CHECK(stats.word_count == 15);
  CHECK(stats.words_per_source.at("news") == 9);
  CHECK(stats.words_per_source.at("wiki") == 6);
  CHECK(corpus::corpus_stats({}).document_count == 0);
}

TEST_CASE("normalize_documents drops invalid and empty documents") {
  std::vector<Document> docs = {
      {"ok", "Салом  Дунё", "s"},
      {"bad", "\xff\xfe", "s"},
      {"empty", "  \t ", "s"},
  };
  const int64_t dropped = corpus::normalize_documents(docs);
  CHECK(dropped == 2);
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].id == "ok");
  CHECK(docs[0].text == "салом дунё");
}

TEST_CASE("corpus files round-trip with blank-line document separators") {
  TempDir tmp;
  const std::string path = tmp.str("corpus.txt");
  std::vector<corpus::SentenceDocument> docs = {
      {"x", {"бу уй.", "бу боғ."}},
      {"y", {"қани?!"}},
  };
  corpus::write_corpus_file(path, docs);

  // Exactly one blank line between documents, one sentence per line.
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  CHECK(buffer.str() == "бу уй.\nбу боғ.\n\nқани?!\n");

  const auto loaded = corpus::read_corpus_file(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].sentences == docs[0].sentences);
  CHECK(loaded[1].sentences == docs[1].sentences);
}

TEST_CASE("read_corpus_file tolerates CRLF and extra blank lines") {
  TempDir tmp;
  const std::string path = tmp.str("crlf.txt");
  std::ofstream(path, std::ios::binary) << "бир гап.\r\n\r\n\r\nиккинчи ҳужжат.\r\n";
  const auto docs = corpus::read_corpus_file(path);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].sentences == std::vector<std::string>{"бир гап."});
  CHECK(docs[1].sentences == std::vector<std::string>{"иккинчи ҳужжат."});
}

TEST_CASE("abbreviation files support comments and blanks") {
  TempDir tmp;
  const std::string path = tmp.str("abbrev.txt");
  std::ofstream(path, std::ios::binary) << "# шаҳар\nш.\n\nй.   # йил\nпроф.\n";
  const auto abbrevs = corpus::read_abbreviation_file(path);
  CHECK(abbrevs == std::set<std::string>{"ш.", "й.", "проф."});
  CHECK(corpus::default_abbreviations().count("ш.") == 1);
  CHECK(corpus::default_abbreviations().count("й.") == 1);
}
