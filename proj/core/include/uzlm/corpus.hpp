#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace uzlm::corpus {

struct Document {
  std::string id;
  std::string text;
  std::string source_tag;
};

struct SentenceDocument {
  std::string id;
  std::vector<std::string> sentences;
};

struct CorpusStats {
  int64_t document_count = 0;
  int64_t word_count = 0;
  int64_t dropped_count = 0;  // invalid UTF-8 or empty after normalization
  std::map<std::string, int64_t> words_per_source;
};

struct SplitSpec {
  double validation_fraction = 0.014;
  uint64_t rng_seed = 0;
};

// Canonicalizes raw text: NFC, full lowercase, control characters removed,
// whitespace runs collapsed to single spaces, trimmed. Throws
// unicode::Utf8Error (with the byte offset) on malformed input. Idempotent.
std::string normalize_text(std::string_view raw);

// `wc -w` semantics: number of maximal non-whitespace runs.
int64_t count_words(std::string_view text);

// Normalizes every document in place, dropping the ones that are invalid
// UTF-8 or empty after normalization. Returns the number dropped.
int64_t normalize_documents(std::vector<Document>& docs);

// Splits normalized text into sentences at '.', '!', '?' followed by
// whitespace (or end of text). A '.' does not end a sentence when the token
// it terminates is a known abbreviation ("ш." style, dot included).
std::vector<std::string> split_sentences(std::string_view text,
                                         const std::set<std::string>& abbreviations);
SentenceDocument split_sentences(const Document& doc,
                                 const std::set<std::string>& abbreviations);

// Deterministic document-level train/validation partition. The shuffled
// document order is a pure function of spec.rng_seed and the input order;
// documents are assigned to validation until its word share reaches
// validation_fraction. Throws std::invalid_argument on an empty corpus or a
// fraction outside [0, 1).
std::pair<std::vector<Document>, std::vector<Document>> split_corpus(
    const std::vector<Document>& docs, const SplitSpec& spec);

CorpusStats corpus_stats(const std::vector<Document>& docs);

// Corpus file layout: one sentence per line, documents separated by exactly
// one blank line. Readers tolerate CRLF endings.
void write_corpus_file(const std::string& path, const std::vector<SentenceDocument>& docs);
std::vector<SentenceDocument> read_corpus_file(const std::string& path);

// One abbreviation per line; '#' starts a comment line; blank lines ignored.
std::set<std::string> read_abbreviation_file(const std::string& path);

// The abbreviations the splitter always knows about.
std::set<std::string> default_abbreviations();

}  // namespace uzlm::corpus
