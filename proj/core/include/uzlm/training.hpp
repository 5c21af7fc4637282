#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uzlm/checkpoint.hpp"
#include "uzlm/corpus.hpp"
#include "uzlm/model.hpp"
#include "uzlm/rng.hpp"
#include "uzlm/tokenizer.hpp"

namespace uzlm::train {

// BERT-style dynamic masking: select_rate of the non-special positions are
// supervised; of those, mask_fraction become [MASK], random_fraction become a
// random non-special token and keep_fraction stay unchanged.
struct MaskingPolicy {
  double select_rate = 0.15;
  double mask_fraction = 0.8;
  double random_fraction = 0.1;
  double keep_fraction = 0.1;
  void validate() const;  // fractions must be non-negative and sum to 1
};

struct PhaseConfig {
  int batch_size = 0;
  int sequence_length = 0;
  int epochs = 0;
};

struct TrainConfig {
  PhaseConfig phase1{300, 128, 36};
  PhaseConfig phase2{50, 512, 4};
  double learning_rate = 1e-4;
  int64_t warmup_steps = 10000;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double gradient_clip_norm = 1.0;  // 0 disables clipping
  double nsp_positive_rate = 0.5;
  MaskingPolicy masking;
  uint64_t rng_seed = 0;
  int64_t checkpoint_every_n_steps = 0;  // 0 = phase boundaries only
  void validate(const model::ModelConfig& model_config) const;
};

struct TokenizedDocument {
  std::string id;
  std::vector<std::vector<int32_t>> sentences;
};

std::vector<TokenizedDocument> tokenize_documents(
    const std::vector<corpus::SentenceDocument>& docs, const tok::Vocabulary& vocab,
    const tok::TokenizerConfig& config);

struct NspPair {
  std::vector<int32_t> a;
  std::vector<int32_t> b;
  int is_next = 0;  // 1 when b immediately follows a in the same document
};

// Draws one next-sentence pair sized to fill token_budget content tokens.
// Positives split a document at a sentence boundary; negatives pair segments
// from two distinct documents. Throws when the corpus cannot support pair
// construction (fewer than two non-empty documents, or no document with two
// sentences).
NspPair sample_nsp_pair(const std::vector<TokenizedDocument>& docs, int token_budget,
                        double positive_rate, Rng& rng);

struct MaskingResult {
  std::vector<int32_t> corrupted;
  std::vector<int32_t> labels;  // original id where supervised, else kIgnoreLabel
};

// Special tokens (ids < kNumSpecialTokens) are never selected and never drawn
// as random replacements.
MaskingResult apply_masking(const std::vector<int32_t>& ids, const MaskingPolicy& policy,
                            const tok::Vocabulary& vocab, Rng& rng);

// Deterministic per (seed, phase_id, epoch): the epoch's pair instances in
// order. Instance count approximates one pass over the corpus and is rounded
// up to a whole number of batches.
std::vector<NspPair> generate_epoch_instances(const std::vector<TokenizedDocument>& docs,
                                              const PhaseConfig& phase, double positive_rate,
                                              uint64_t seed, int phase_id, int epoch);

// Packs pairs[first, first+count) into a model batch; degenerate pairs with
// an empty side are dropped and counted in *skipped.
model::Batch build_batch(const std::vector<NspPair>& pairs, size_t first, size_t count,
                         int seq_len, const MaskingPolicy& policy, const tok::Vocabulary& vocab,
                         Rng& rng, int64_t* skipped);

struct TrainingSchedule {
  int64_t phase1_steps_per_epoch = 0;
  int64_t phase2_steps_per_epoch = 0;
  int64_t total_steps = 0;
};

// The exact step plan pretrain() will follow for this corpus and config.
TrainingSchedule compute_schedule(const std::vector<TokenizedDocument>& docs,
                                  const TrainConfig& config);

using OptimizerState = model::OptimizerSnapshot;

OptimizerState init_optimizer(const model::ModelConfig& config);

// Linear warmup to the configured peak at global_step == warmup_steps, then
// linear decay reaching zero at total_scheduled_steps. global_step is
// 1-based.
double learning_rate_at(int64_t global_step, const TrainConfig& config,
                        int64_t total_scheduled_steps);

struct StepInfo {
  bool applied = false;  // false when a non-finite gradient rejected the step
  double lr = 0.0;
  double grad_norm = 0.0;  // pre-clip global norm
};

// One AdamW update with global-norm clipping and decoupled weight decay
// (biases and layer-norm parameters are not decayed). Rejected steps leave
// the state and moments untouched.
StepInfo optimizer_step(model::EncoderState<float>* state,
                        const model::EncoderState<float>& grads, OptimizerState* opt,
                        const TrainConfig& config, double lr);

struct StepRecord {
  int64_t step = 0;  // global, 1-based, counts attempted batches
  int phase = 0;
  int epoch = 0;  // 1-based within phase
  double mlm_loss = 0.0;
  double nsp_loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since pretrain() entry
};

struct EpochSummary {
  int phase = 0;
  int epoch = 0;
  int64_t global_step = 0;
  double train_mlm_loss = 0.0;
  double train_nsp_loss = 0.0;
  double train_mlm_accuracy = 0.0;
  double train_nsp_accuracy = 0.0;
  // NaN when no validation documents were supplied.
  double val_mlm_loss = 0.0;
  double val_nsp_loss = 0.0;
  double val_mlm_accuracy = 0.0;
  double val_nsp_accuracy = 0.0;
};

struct PretrainOptions {
  std::string checkpoint_dir;
  std::string metrics_path;  // empty = no metrics log; otherwise append-only JSONL
  bool resume = false;       // continue from the newest checkpoint in checkpoint_dir
  int64_t max_steps = 0;     // 0 = unlimited; otherwise interrupt after this many steps
  // Return false to stop after the epoch (a checkpoint is written first).
  std::function<bool(const EpochSummary&)> epoch_callback;
  std::function<void(const StepRecord&)> step_callback;
};

struct PretrainResult {
  std::string final_checkpoint_dir;
  std::vector<EpochSummary> epochs;
  int64_t total_steps = 0;
  int64_t rejected_steps = 0;
  int64_t skipped_pairs = 0;
  bool stopped_early = false;
};

// Runs the two-phase MLM+NSP pretraining loop. Fully deterministic per seed:
// batches, masking and dropout derive from (seed, phase, epoch, step), so an
// interrupted run resumed from its checkpoint reproduces the uninterrupted
// run bit for bit. Validates everything before touching the filesystem.
PretrainResult pretrain(const std::vector<TokenizedDocument>& train_docs,
                        const std::vector<TokenizedDocument>& val_docs,
                        const tok::Vocabulary& vocab, const model::ModelConfig& model_config,
                        const TrainConfig& train_config, const PretrainOptions& options);

}  // namespace uzlm::train
