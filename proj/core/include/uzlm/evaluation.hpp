#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uzlm/model.hpp"
#include "uzlm/tokenizer.hpp"

namespace uzlm::eval {

struct EvalConfig {
  int window_words = 128;
  int stride_words = 64;
  std::vector<int> top_ks = {1, 3, 5};
  int num_runs = 5;
  uint64_t rng_seed = 0;
  void validate() const;
};

// One scoring unit: a window of words with one of them designated for
// masking. words[masked_index] is the gold word.
struct EvalSequence {
  std::vector<std::string> words;
  int masked_index = -1;
  int window_offset = 0;  // word offset of the window start in the source text

  const std::string& gold() const { return words[masked_index]; }
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string name() const = 0;
  // Up to k candidate words, best first. words[masked_index] holds the gold
  // word so the interface carries the full window; honest predictors must
  // treat that slot as hidden. Returning nullopt skips the sequence (it is
  // excluded from accuracy denominators and counted).
  virtual std::optional<std::vector<std::string>> predict(const std::vector<std::string>& words,
                                                          int masked_index, int k) const = 0;
};

using WordPredicate = std::function<bool(const std::string&)>;

struct WindowingResult {
  std::vector<EvalSequence> sequences;
  int64_t windows_total = 0;
  int64_t windows_unmaskable = 0;  // windows containing no maskable word
};

// Whitespace-splits text and cuts full windows at word offsets 0, stride,
// 2*stride, ...; each window gets one masked position drawn uniformly among
// its maskable words, re-drawn per run_index. Throws when the text is
// shorter than one window.
WindowingResult make_eval_sequences(const std::string& text, const EvalConfig& config,
                                    int run_index, const WordPredicate& maskable = {});

struct RunScore {
  std::map<int, int64_t> matches;         // k -> hit count
  std::map<int, double> accuracy_percent;  // k -> 100 * hits / scored
  int64_t scored = 0;
  int64_t skipped = 0;
};

// Queries the predictor once per sequence with the largest k and scores each
// configured k against the ranked prefix. Throws when every sequence was
// skipped.
RunScore score_run(const std::vector<EvalSequence>& sequences, const Predictor& predictor,
                   const std::vector<int>& top_ks);

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

Aggregate aggregate_runs(const std::vector<double>& values);

// "64.06 (1.08%)" — mean and standard deviation, two decimals each.
std::string format_cell(const Aggregate& aggregate);

struct EvalDataset {
  std::string name;
  std::string text;
};

struct ReportCell {
  std::string dataset;
  std::string predictor;
  int k = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_run;
};

struct EvalReport {
  EvalConfig config;
  std::vector<std::string> datasets;
  std::vector<std::string> predictors;
  std::vector<ReportCell> cells;  // dataset-major, then predictor, then k
  struct SequenceCount {
    std::string dataset;
    int64_t windows_total = 0;
    int64_t windows_unmaskable = 0;
    int64_t sequences = 0;
  };
  std::vector<SequenceCount> sequence_counts;
  struct SkipCount {
    std::string dataset;
    std::string predictor;
    int run = 0;
    int64_t scored = 0;
    int64_t skipped = 0;
  };
  std::vector<SkipCount> skip_counts;
};

// Runs every predictor over every dataset num_runs times and aggregates.
EvalReport run_evaluation(const std::vector<EvalDataset>& datasets,
                          const std::vector<const Predictor*>& predictors,
                          const EvalConfig& config, const WordPredicate& maskable = {});

std::string report_to_json(const EvalReport& report);
// Fixed-width table: Model | Evaluation dataset | Top k Match ... columns.
std::string report_to_table(const EvalReport& report);

// Scores a trained encoder: the masked word is replaced by [MASK], the
// window runs through the model and candidates are the best-scoring
// non-special, non-continuation tokens at the masked position. Words that do
// not map to a single piece are skipped under kSingleTokenOnly; under
// kAllPieces every piece is masked and the single candidate is the word
// joined from the per-position argmax pieces.
class CheckpointPredictor : public Predictor {
 public:
  enum class Policy { kSingleTokenOnly, kAllPieces };

  CheckpointPredictor(model::EncoderState<float> state, tok::Vocabulary vocab,
                      tok::TokenizerConfig tok_config,
                      Policy policy = Policy::kSingleTokenOnly,
                      std::string name = "checkpoint");

  std::string name() const override { return name_; }
  std::optional<std::vector<std::string>> predict(const std::vector<std::string>& words,
                                                  int masked_index, int k) const override;

 private:
  model::EncoderState<float> state_;
  tok::Vocabulary vocab_;
  tok::TokenizerConfig tok_config_;
  Policy policy_;
  std::string name_;
};

// Always answers the gold word first: a ceiling fixture (it reads the gold
// slot on purpose).
class OraclePredictor : public Predictor {
 public:
  std::string name() const override { return "oracle"; }
  std::optional<std::vector<std::string>> predict(const std::vector<std::string>& words,
                                                  int masked_index, int k) const override;
};

// Candidates that can never equal a whitespace-delimited word: a floor
// fixture pinning accuracy to exactly zero.
class AdversarialPredictor : public Predictor {
 public:
  std::string name() const override { return "adversarial"; }
  std::optional<std::vector<std::string>> predict(const std::vector<std::string>& words,
                                                  int masked_index, int k) const override;
};

// Draws k distinct words from a fixed list, seeded by the visible context
// (the gold slot is excluded from the hash), giving a chance-level baseline.
class UniformPredictor : public Predictor {
 public:
  UniformPredictor(std::vector<std::string> words, uint64_t seed);
  std::string name() const override { return "uniform"; }
  std::optional<std::vector<std::string>> predict(const std::vector<std::string>& words,
                                                  int masked_index, int k) const override;

 private:
  std::vector<std::string> words_;
  uint64_t seed_;
};

}  // namespace uzlm::eval
