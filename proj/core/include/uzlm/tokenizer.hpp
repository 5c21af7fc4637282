#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "uzlm/vocab.hpp"

namespace uzlm::tok {

struct TokenizerConfig {
  int vocab_size = 30000;
  bool lowercase = true;
  std::string continuation_prefix = kContinuationPrefix;
  int max_chars_per_word = 100;
  int min_pair_frequency = 2;
};

// Word -> corpus frequency. Ordered so that training scans are deterministic.
using WordFrequencies = std::map<std::string, int64_t>;

// Counts whitespace-delimited words over normalized sentences.
WordFrequencies count_word_frequencies(const std::vector<std::string>& sentences);

// Trains a WordPiece vocabulary:
//   1. the five special tokens,
//   2. every character seen in the corpus, in both word-initial ("х") and
//      continuation ("##х") form, sorted by code point,
//   3. greedy merges: the adjacent symbol pair with the highest
//      count(pair) / (count(left) * count(right)) is fused, ties broken by
//      the lexicographically smallest merged token, until vocab_size is
//      reached or no pair occurs min_pair_frequency times.
// Deterministic for a fixed corpus and config.
Vocabulary train_wordpiece(const WordFrequencies& corpus, const TokenizerConfig& config);

// Greedy longest-match-first subword split of a single whitespace-free word.
// A word with an uncovered position, or longer than max_chars_per_word
// characters, encodes to a single [UNK].
std::vector<int> encode_word(std::string_view word, const Vocabulary& vocab,
                             const TokenizerConfig& config);

// Whitespace-splits, then concatenates the per-word encodings.
std::vector<int> encode_text(std::string_view text, const Vocabulary& vocab,
                             const TokenizerConfig& config);

// Inverse of encoding up to normalization: continuations are glued to the
// previous piece, words are joined with single spaces; [PAD]/[CLS]/[SEP] are
// dropped. Throws std::out_of_range on an invalid id.
std::string decode(const std::vector<int>& ids, const Vocabulary& vocab);

struct PairInput {
  std::vector<int> token_ids;     // [CLS] a [SEP] b [SEP] + [PAD]...
  std::vector<int> segment_ids;   // 0 over [CLS] a [SEP], 1 over b [SEP], 0 over padding
  std::vector<int> attention_mask;  // 1 over real tokens, 0 over padding
};

// Packs two segments into one max_len-sized model input. When the pair does
// not fit, tokens are removed one at a time from the end of the longer
// segment (from b on ties). Throws std::invalid_argument when max_len < 5.
PairInput build_pair_input(std::vector<int> a, std::vector<int> b, int max_len);

}  // namespace uzlm::tok
