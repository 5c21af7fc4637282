#include "uzlm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "uzlm/rng.hpp"
#include "uzlm/unicode.hpp"

namespace uzlm::corpus {

namespace {

bool is_terminator(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::string normalize_text(std::string_view raw) {
  const size_t bad = unicode::find_invalid_utf8(raw);
  if (bad != unicode::kValidUtf8) {
    throw unicode::Utf8Error(bad, "invalid UTF-8 byte sequence at offset " + std::to_string(bad));
  }
  const std::string lowered = unicode::to_lower(unicode::to_nfc(raw));
  // Lowercasing can denormalize in rare full-mapping cases; recompose.
  const std::string recomposed = unicode::to_nfc(lowered);

  std::string out;
  out.reserve(recomposed.size());
  bool pending_space = false;
  for (char32_t c : unicode::decode_utf8(recomposed)) {
    if (unicode::is_whitespace(c)) {
      pending_space = true;
      continue;
    }
    if (unicode::is_control(c)) continue;
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out += unicode::encode_utf8(c);
  }
  return out;
}

int64_t count_words(std::string_view text) {
  int64_t count = 0;
  bool in_word = false;
  for (char32_t c : unicode::decode_utf8(text)) {
    const bool ws = unicode::is_whitespace(c);
    if (!ws && !in_word) ++count;
    in_word = !ws;
  }
  return count;
}

int64_t normalize_documents(std::vector<Document>& docs) {
  std::vector<Document> kept;
  kept.reserve(docs.size());
  int64_t dropped = 0;
  for (auto& doc : docs) {
    std::string normalized;
    try {
      normalized = normalize_text(doc.text);
    } catch (const unicode::Utf8Error&) {
      ++dropped;
      continue;
    }
    if (normalized.empty()) {
      ++dropped;
      continue;
    }
    doc.text = std::move(normalized);
    kept.push_back(std::move(doc));
  }
  docs = std::move(kept);
  return dropped;
}

std::vector<std::string> split_sentences(std::string_view text,
                                         const std::set<std::string>& abbreviations) {
  const std::vector<std::string> chars = unicode::utf8_characters(text);
  std::vector<std::string> sentences;
  std::string current;
  std::string current_token;  // token being built, terminator included

  auto flush_sentence = [&] {
    std::string s = trim(current);
    if (!s.empty()) sentences.push_back(std::move(s));
    current.clear();
  };

  for (size_t i = 0; i < chars.size(); ++i) {
    const std::string& ch = chars[i];
    current += ch;
    const bool ws = ch == " ";
    if (ws) {
      current_token.clear();
    } else {
      current_token += ch;
    }

    if (ch.size() == 1 && is_terminator(static_cast<char32_t>(ch[0]))) {
      // Consume the rest of a punctuation cluster like "?!".
      while (i + 1 < chars.size() && chars[i + 1].size() == 1 &&
             is_terminator(static_cast<char32_t>(chars[i + 1][0]))) {
        ++i;
        current += chars[i];
        current_token += chars[i];
      }
      const bool at_end = i + 1 == chars.size();
      const bool before_space = !at_end && chars[i + 1] == " ";
      if (!at_end && !before_space) continue;
      // A plain '.'-terminated token that is a known abbreviation does not
      // end the sentence.
      if (current_token.size() >= 2 && current_token.back() == '.' &&
          abbreviations.count(current_token) > 0) {
        continue;
      }
      flush_sentence();
      current_token.clear();
    }
  }
  flush_sentence();
  return sentences;
}

SentenceDocument split_sentences(const Document& doc,
                                 const std::set<std::string>& abbreviations) {
  return SentenceDocument{doc.id, split_sentences(doc.text, abbreviations)};
}

std::pair<std::vector<Document>, std::vector<Document>> split_corpus(
    const std::vector<Document>& docs, const SplitSpec& spec) {
  if (docs.empty()) throw std::invalid_argument("split_corpus: empty corpus");
  if (spec.validation_fraction < 0.0 || spec.validation_fraction >= 1.0) {
    throw std::invalid_argument("split_corpus: validation_fraction must be in [0, 1)");
  }

  std::vector<size_t> order(docs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed(spec.rng_seed, {0x5e71u}));
  rng.shuffle(order);

  int64_t total_words = 0;
  std::vector<int64_t> words(docs.size());
  for (size_t i = 0; i < docs.size(); ++i) {
    words[i] = count_words(docs[i].text);
    total_words += words[i];
  }
  const double target = spec.validation_fraction * static_cast<double>(total_words);

  std::vector<Document> train, validation;
  int64_t validation_words = 0;
  for (size_t idx : order) {
    if (static_cast<double>(validation_words) < target) {
      validation.push_back(docs[idx]);
      validation_words += words[idx];
    } else {
      train.push_back(docs[idx]);
    }
  }
  return {std::move(train), std::move(validation)};
}

CorpusStats corpus_stats(const std::vector<Document>& docs) {
  CorpusStats stats;
  for (const auto& doc : docs) {
    const int64_t words = count_words(doc.text);
    stats.document_count += 1;
    stats.word_count += words;
    stats.words_per_source[doc.source_tag] += words;
  }
  return stats;
}

void write_corpus_file(const std::string& path, const std::vector<SentenceDocument>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  bool first = true;
  for (const auto& doc : docs) {
    if (!first) out << "\n";
    first = false;
    for (const auto& sentence : doc.sentences) out << sentence << "\n";
  }
}

std::vector<SentenceDocument> read_corpus_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<SentenceDocument> docs;
  SentenceDocument current;
  std::string line;
  size_t doc_index = 0;

  auto flush_doc = [&] {
    if (!current.sentences.empty()) {
      std::ostringstream id;
      id << "doc" << std::setfill('0') << std::setw(6) << doc_index++;
      current.id = id.str();
      docs.push_back(std::move(current));
      current = SentenceDocument{};
    }
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush_doc();
    } else {
      current.sentences.push_back(line);
    }
  }
  flush_doc();
  return docs;
}

std::set<std::string> read_abbreviation_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open abbreviation file: " + path);
  std::set<std::string> abbreviations;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (!line.empty()) abbreviations.insert(line);
  }
  return abbreviations;
}

std::set<std::string> default_abbreviations() { return {"ш.", "й."}; }

}  // namespace uzlm::corpus
