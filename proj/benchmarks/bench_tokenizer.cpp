#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "uzlm/rng.hpp"
#include "uzlm/tokenizer.hpp"

namespace {

using namespace uzlm;

// A corpus-like word list with subword structure: stems plus suffix chains.
std::vector<std::string> synthetic_words() {
  const std::vector<std::string> stems = {"уй", "китоб", "мактаб", "бола", "сув",
                                          "дарахт", "шаҳар", "одам", "кун", "йил"};
  const std::vector<std::string> suffixes = {"", "да", "лар", "нинг", "дан", "га",
                                             "ни", "дагилар"};
  std::vector<std::string> words;
  for (const auto& stem : stems) {
    for (const auto& suffix : suffixes) words.push_back(stem + suffix);
  }
  return words;
}

tok::Vocabulary trained_vocab(const tok::TokenizerConfig& config) {
  tok::WordFrequencies freqs;
  Rng rng(42);
  const auto words = synthetic_words();
  for (const auto& word : words) freqs[word] = 3 + static_cast<int64_t>(rng.uniform_int(40));
  return tok::train_wordpiece(freqs, config);
}

std::string sample_text(int word_count) {
  const auto words = synthetic_words();
  Rng rng(7);
  std::string text;
  for (int i = 0; i < word_count; ++i) {
    if (i) text += ' ';
    text += words[rng.uniform_int(words.size())];
  }
  return text;
}

void BM_TrainWordpiece(benchmark::State& state) {
  tok::TokenizerConfig config;
  config.vocab_size = static_cast<int>(state.range(0));
  config.min_pair_frequency = 1;
  tok::WordFrequencies freqs;
  Rng rng(42);
  for (const auto& word : synthetic_words()) {
    freqs[word] = 3 + static_cast<int64_t>(rng.uniform_int(40));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(tok::train_wordpiece(freqs, config));
  }
}
BENCHMARK(BM_TrainWordpiece)->Arg(120)->Arg(400);

void BM_EncodeText(benchmark::State& state) {
  tok::TokenizerConfig config;
  config.vocab_size = 400;
  config.min_pair_frequency = 1;
  const tok::Vocabulary vocab = trained_vocab(config);
  const std::string text = sample_text(static_cast<int>(state.range(0)));
  int64_t tokens = 0;
  for (auto _ : state) {
    const auto ids = tok::encode_text(text, vocab, config);
    tokens += static_cast<int64_t>(ids.size());
    benchmark::DoNotOptimize(ids);
  }
  state.SetItemsProcessed(tokens);
}
BENCHMARK(BM_EncodeText)->Arg(128)->Arg(1024)->Arg(8192);

}  // namespace

BENCHMARK_MAIN();
