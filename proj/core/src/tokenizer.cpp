#include "uzlm/tokenizer.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "uzlm/unicode.hpp"

namespace uzlm::tok {

namespace {

std::vector<std::string> whitespace_split(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string strip_continuation(const std::string& symbol) {
  if (Vocabulary::is_continuation(symbol)) return symbol.substr(2);
  return symbol;
}

using SymbolPair = std::pair<std::string, std::string>;

struct TrainerWord {
  std::vector<std::string> symbols;
  int64_t freq = 0;
};

// Exact score comparison: count(p1)/(l1*r1) vs count(p2)/(l2*r2) via
// cross-multiplication, so determinism never hinges on float rounding.
bool score_less(int64_t c1, int64_t l1, int64_t r1, int64_t c2, int64_t l2, int64_t r2) {
  const __int128 lhs = static_cast<__int128>(c1) * l2 * r2;
  const __int128 rhs = static_cast<__int128>(c2) * l1 * r1;
  return lhs < rhs;
}

}  // namespace

WordFrequencies count_word_frequencies(const std::vector<std::string>& sentences) {
  WordFrequencies freqs;
  for (const auto& sentence : sentences) {
    for (auto& word : whitespace_split(sentence)) freqs[word] += 1;
  }
  return freqs;
}

Vocabulary train_wordpiece(const WordFrequencies& corpus, const TokenizerConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("train_wordpiece: empty corpus");

  // Split every word into its initial character plus "##" continuations.
  std::vector<TrainerWord> words;
  words.reserve(corpus.size());
  std::set<std::string> alphabet;
  for (const auto& [word, freq] : corpus) {
    if (freq <= 0) continue;
    TrainerWord tw;
    tw.freq = freq;
    const auto chars = unicode::utf8_characters(word);
    for (size_t i = 0; i < chars.size(); ++i) {
      alphabet.insert(chars[i]);
      tw.symbols.push_back(i == 0 ? chars[i] : config.continuation_prefix + chars[i]);
    }
    if (!tw.symbols.empty()) words.push_back(std::move(tw));
  }
  if (words.empty()) throw std::invalid_argument("train_wordpiece: corpus has no words");

  Vocabulary vocab;
  const int base_size = kNumSpecialTokens + 2 * static_cast<int>(alphabet.size());
  if (config.vocab_size < base_size) {
    std::ostringstream msg;
    msg << "vocab_size " << config.vocab_size << " cannot hold the " << kNumSpecialTokens
        << " special tokens plus the corpus alphabet (" << 2 * alphabet.size()
        << " character symbols)";
    throw std::invalid_argument(msg.str());
  }
  for (const auto& ch : alphabet) vocab.add(ch);
  for (const auto& ch : alphabet) vocab.add(config.continuation_prefix + ch);

  // Frequency tables. std::map keeps scan order deterministic.
  std::map<std::string, int64_t> symbol_counts;
  std::map<SymbolPair, int64_t> pair_counts;
  std::map<SymbolPair, std::set<size_t>> pair_words;

  auto add_word_counts = [&](size_t w, int64_t sign) {
    const auto& symbols = words[w].symbols;
    const int64_t delta = sign * words[w].freq;
    for (size_t i = 0; i < symbols.size(); ++i) {
      symbol_counts[symbols[i]] += delta;
      if (i + 1 < symbols.size()) {
        const SymbolPair pair{symbols[i], symbols[i + 1]};
        pair_counts[pair] += delta;
        if (sign > 0) {
          pair_words[pair].insert(w);
        }
      }
    }
  };
  for (size_t w = 0; w < words.size(); ++w) add_word_counts(w, +1);

  while (vocab.size() < config.vocab_size) {
    // Pick the best-scoring pair; ties go to the lexicographically smallest
    // merged token, then the smallest left symbol.
    bool found = false;
    SymbolPair best;
    std::string best_merged;
    int64_t best_count = 0, best_l = 1, best_r = 1;
    for (const auto& [pair, count] : pair_counts) {
      if (count < config.min_pair_frequency) continue;
      const std::string merged = pair.first + strip_continuation(pair.second);
      if (vocab.contains(merged)) continue;  // already merged via another route
      const int64_t l = symbol_counts[pair.first];
      const int64_t r = symbol_counts[pair.second];
      if (found) {
        if (score_less(count, l, r, best_count, best_l, best_r)) continue;
        if (!score_less(best_count, best_l, best_r, count, l, r)) {
          // Equal score: lexicographic tie-break.
          if (merged > best_merged) continue;
          if (merged == best_merged && pair.first >= best.first) continue;
        }
      }
      found = true;
      best = pair;
      best_merged = merged;
      best_count = count;
      best_l = l;
      best_r = r;
    }
    if (!found) break;

    vocab.add(best_merged);

    // Rewrite only the words that contain the merged pair.
    const std::set<size_t> affected = pair_words[best];
    for (size_t w : affected) {
      add_word_counts(w, -1);
      auto& symbols = words[w].symbols;
      std::vector<std::string> rewritten;
      rewritten.reserve(symbols.size());
      for (size_t i = 0; i < symbols.size(); ++i) {
        if (i + 1 < symbols.size() && symbols[i] == best.first && symbols[i + 1] == best.second) {
          rewritten.push_back(best_merged);
          ++i;
        } else {
          rewritten.push_back(symbols[i]);
        }
      }
      symbols = std::move(rewritten);
      add_word_counts(w, +1);
    }

    // Drop exhausted entries so the scan stays tight.
    for (auto it = pair_counts.begin(); it != pair_counts.end();) {
      if (it->second <= 0) {
        pair_words.erase(it->first);
        it = pair_counts.erase(it);
      } else {
        ++it;
      }
    }
  }
  return vocab;
}

std::vector<int> encode_word(std::string_view word, const Vocabulary& vocab,
                             const TokenizerConfig& config) {
  std::vector<std::string> chars;
  try {
    chars = unicode::utf8_characters(word);
  } catch (const unicode::Utf8Error&) {
    return {kUnkId};
  }
  if (chars.empty()) return {};
  if (static_cast<int>(chars.size()) > config.max_chars_per_word) return {kUnkId};

  std::vector<int> ids;
  size_t pos = 0;
  while (pos < chars.size()) {
    std::optional<int> match;
    size_t match_end = pos;
    std::string prefix = pos > 0 ? config.continuation_prefix : "";
    // Longest candidate first.
    for (size_t end = chars.size(); end > pos; --end) {
      std::string candidate = prefix;
      for (size_t i = pos; i < end; ++i) candidate += chars[i];
      if (auto id = vocab.id_of(candidate)) {
        match = id;
        match_end = end;
        break;
      }
    }
    if (!match) return {kUnkId};
    ids.push_back(*match);
    pos = match_end;
  }
  return ids;
}

std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab,
                             const TokenizerConfig& config) {
  std::vector<int> ids;
  for (const auto& word : whitespace_split(text)) {
    const auto word_ids = encode_word(word, vocab, config);
    ids.insert(ids.end(), word_ids.begin(), word_ids.end());
  }
  return ids;
}

std::string decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    const std::string& token = vocab.token(id);  // throws on out-of-range ids
    if (id == kPadId || id == kClsId || id == kSepId) continue;
    if (Vocabulary::is_continuation(token)) {
      out += token.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += token;
    }
  }
  return out;
}

PairInput build_pair_input(std::vector<int> a, std::vector<int> b, int max_len) {
  if (max_len < 5) {
    throw std::invalid_argument("build_pair_input: max_len must be at least 5");
  }
  const size_t budget = static_cast<size_t>(max_len) - 3;
  while (a.size() + b.size() > budget) {
    if (a.size() > b.size()) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }

  PairInput out;
  out.token_ids.reserve(max_len);
  out.token_ids.push_back(kClsId);
  out.token_ids.insert(out.token_ids.end(), a.begin(), a.end());
  out.token_ids.push_back(kSepId);
  const size_t segment_a_len = out.token_ids.size();
  out.token_ids.insert(out.token_ids.end(), b.begin(), b.end());
  out.token_ids.push_back(kSepId);

  out.segment_ids.assign(segment_a_len, 0);
  out.segment_ids.resize(out.token_ids.size(), 1);
  out.attention_mask.assign(out.token_ids.size(), 1);

  out.token_ids.resize(max_len, kPadId);
  out.segment_ids.resize(max_len, 0);
  out.attention_mask.resize(max_len, 0);
  return out;
}

}  // namespace uzlm::tok
