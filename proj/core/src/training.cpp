#include "uzlm/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace uzlm::train {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr uint64_t kTagInstance = 0x9a17;
constexpr uint64_t kTagBatch = 0xba7c;
constexpr uint64_t kTagDropout = 0xd307;
constexpr uint64_t kTagValidation = 0x7a1d;

int64_t epoch_instance_count(const std::vector<TokenizedDocument>& docs,
                             const PhaseConfig& phase) {
  const int64_t budget = phase.sequence_length - 3;
  int64_t total_tokens = 0;
  for (const auto& doc : docs) {
    for (const auto& sentence : doc.sentences) {
      total_tokens += static_cast<int64_t>(sentence.size());
    }
  }
  const int64_t raw = std::max<int64_t>(1, (total_tokens + budget - 1) / budget);
  const int64_t bs = phase.batch_size;
  return (raw + bs - 1) / bs * bs;
}

bool nsp_feasible(const std::vector<TokenizedDocument>& docs) {
  int nonempty = 0;
  bool splittable = false;
  for (const auto& doc : docs) {
    if (!doc.sentences.empty()) ++nonempty;
    if (doc.sentences.size() >= 2) splittable = true;
  }
  return nonempty >= 2 && splittable;
}

}  // namespace

void MaskingPolicy::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(select_rate)) throw std::invalid_argument("select_rate must lie in [0, 1]");
  if (!in_unit(mask_fraction) || !in_unit(random_fraction) || !in_unit(keep_fraction)) {
    throw std::invalid_argument("masking fractions must lie in [0, 1]");
  }
  if (std::abs(mask_fraction + random_fraction + keep_fraction - 1.0) > 1e-9) {
    throw std::invalid_argument("masking fractions must sum to 1");
  }
}

void TrainConfig::validate(const model::ModelConfig& model_config) const {
  auto check_phase = [&model_config](const PhaseConfig& p, const char* name) {
    if (p.epochs < 0) throw std::invalid_argument(std::string(name) + ": epochs must be >= 0");
    if (p.epochs == 0) return;
    if (p.batch_size < 1) {
      throw std::invalid_argument(std::string(name) + ": batch_size must be >= 1");
    }
    if (p.sequence_length < 5) {
      throw std::invalid_argument(std::string(name) + ": sequence_length must be >= 5");
    }
    if (p.sequence_length > model_config.max_positions) {
      throw std::invalid_argument(std::string(name) +
                                  ": sequence_length exceeds model max_positions");
    }
  };
  check_phase(phase1, "phase1");
  check_phase(phase2, "phase2");
  if (phase1.epochs + phase2.epochs < 1) {
    throw std::invalid_argument("training needs at least one epoch across both phases");
  }
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be positive");
  if (warmup_steps < 0) throw std::invalid_argument("warmup_steps must be >= 0");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (adam_epsilon <= 0) throw std::invalid_argument("adam_epsilon must be positive");
  if (gradient_clip_norm < 0) throw std::invalid_argument("gradient_clip_norm must be >= 0");
  if (!(nsp_positive_rate >= 0 && nsp_positive_rate <= 1)) {
    throw std::invalid_argument("nsp_positive_rate must lie in [0, 1]");
  }
  if (checkpoint_every_n_steps < 0) {
    throw std::invalid_argument("checkpoint_every_n_steps must be >= 0");
  }
  masking.validate();
}

std::vector<TokenizedDocument> tokenize_documents(
    const std::vector<corpus::SentenceDocument>& docs, const tok::Vocabulary& vocab,
    const tok::TokenizerConfig& config) {
  std::vector<TokenizedDocument> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    TokenizedDocument td;
    td.id = doc.id;
    for (const auto& sentence : doc.sentences) {
      std::vector<int> ids = tok::encode_text(sentence, vocab, config);
      if (ids.empty()) continue;
      td.sentences.emplace_back(ids.begin(), ids.end());
    }
    out.push_back(std::move(td));
  }
  return out;
}

NspPair sample_nsp_pair(const std::vector<TokenizedDocument>& docs, int token_budget,
                        double positive_rate, Rng& rng) {
  if (token_budget < 2) throw std::invalid_argument("token_budget must be >= 2");
  std::vector<size_t> nonempty;
  std::vector<size_t> splittable;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].sentences.empty()) nonempty.push_back(i);
    if (docs[i].sentences.size() >= 2) splittable.push_back(i);
  }
  if (nonempty.size() < 2) {
    throw std::invalid_argument("NSP sampling needs at least two non-empty documents");
  }
  if (splittable.empty()) {
    throw std::invalid_argument("NSP sampling needs a document with at least two sentences");
  }

  // Consecutive sentences up to budget, walking backward so the run ends just
  // before the split point.
  auto extend_back = [](const TokenizedDocument& d, int end, int budget) {
    int start = end;
    int64_t total = 0;
    while (start > 0) {
      const int64_t len = static_cast<int64_t>(d.sentences[start - 1].size());
      if (start < end && total + len > budget) break;
      total += len;
      --start;
    }
    std::vector<int32_t> out;
    for (int s = start; s < end; ++s) {
      out.insert(out.end(), d.sentences[s].begin(), d.sentences[s].end());
    }
    return out;
  };
  auto extend_forward = [](const TokenizedDocument& d, size_t start, int budget) {
    std::vector<int32_t> out;
    int64_t total = 0;
    for (size_t s = start; s < d.sentences.size(); ++s) {
      const int64_t len = static_cast<int64_t>(d.sentences[s].size());
      if (s > start && total + len > budget) break;
      total += len;
      out.insert(out.end(), d.sentences[s].begin(), d.sentences[s].end());
    }
    return out;
  };

  NspPair pair;
  pair.is_next = rng.bernoulli(positive_rate) ? 1 : 0;
  const int budget_a = std::max(1, token_budget / 2);
  if (pair.is_next == 1) {
    const TokenizedDocument& d = docs[splittable[rng.uniform_int(splittable.size())]];
    const int split = 1 + static_cast<int>(rng.uniform_int(d.sentences.size() - 1));
    pair.a = extend_back(d, split, budget_a);
    pair.b = extend_forward(d, split,
                            std::max(1, token_budget - static_cast<int>(pair.a.size())));
  } else {
    const size_t i1 = nonempty[rng.uniform_int(nonempty.size())];
    size_t i2 = i1;
    while (i2 == i1) i2 = nonempty[rng.uniform_int(nonempty.size())];
    const TokenizedDocument& d1 = docs[i1];
    const TokenizedDocument& d2 = docs[i2];
    pair.a = extend_forward(d1, rng.uniform_int(d1.sentences.size()), budget_a);
    pair.b = extend_forward(d2, rng.uniform_int(d2.sentences.size()),
                            std::max(1, token_budget - static_cast<int>(pair.a.size())));
  }
  return pair;
}

MaskingResult apply_masking(const std::vector<int32_t>& ids, const MaskingPolicy& policy,
                            const tok::Vocabulary& vocab, Rng& rng) {
  const int num_nonspecial = vocab.size() - tok::kNumSpecialTokens;
  if (num_nonspecial <= 0) {
    throw std::invalid_argument("vocabulary has no maskable tokens");
  }
  MaskingResult out;
  out.corrupted = ids;
  out.labels.assign(ids.size(), model::kIgnoreLabel);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (tok::Vocabulary::is_special_id(ids[i])) continue;
    if (!rng.bernoulli(policy.select_rate)) continue;
    out.labels[i] = ids[i];
    const double u = rng.uniform();
    if (u < policy.mask_fraction) {
      out.corrupted[i] = tok::kMaskId;
    } else if (u < policy.mask_fraction + policy.random_fraction) {
      out.corrupted[i] = tok::kNumSpecialTokens +
                         static_cast<int32_t>(rng.uniform_int(
                             static_cast<uint64_t>(num_nonspecial)));
    }
  }
  return out;
}

std::vector<NspPair> generate_epoch_instances(const std::vector<TokenizedDocument>& docs,
                                              const PhaseConfig& phase, double positive_rate,
                                              uint64_t seed, int phase_id, int epoch) {
  const int64_t n = epoch_instance_count(docs, phase);
  const int budget = phase.sequence_length - 3;
  std::vector<NspPair> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {kTagInstance, static_cast<uint64_t>(phase_id),
                               static_cast<uint64_t>(epoch), static_cast<uint64_t>(i)}));
    out.push_back(sample_nsp_pair(docs, budget, positive_rate, rng));
  }
  return out;
}

model::Batch build_batch(const std::vector<NspPair>& pairs, size_t first, size_t count,
                         int seq_len, const MaskingPolicy& policy, const tok::Vocabulary& vocab,
                         Rng& rng, int64_t* skipped) {
  model::Batch batch;
  batch.seq_len = seq_len;
  for (size_t i = first; i < first + count && i < pairs.size(); ++i) {
    const NspPair& pair = pairs[i];
    if (pair.a.empty() || pair.b.empty()) {
      if (skipped != nullptr) ++*skipped;
      continue;
    }
    tok::PairInput input =
        tok::build_pair_input(std::vector<int>(pair.a.begin(), pair.a.end()),
                              std::vector<int>(pair.b.begin(), pair.b.end()), seq_len);
    const std::vector<int32_t> ids(input.token_ids.begin(), input.token_ids.end());
    MaskingResult masked = apply_masking(ids, policy, vocab, rng);
    batch.token_ids.insert(batch.token_ids.end(), masked.corrupted.begin(),
                           masked.corrupted.end());
    batch.mlm_labels.insert(batch.mlm_labels.end(), masked.labels.begin(), masked.labels.end());
    batch.segment_ids.insert(batch.segment_ids.end(), input.segment_ids.begin(),
                             input.segment_ids.end());
    batch.attention_mask.insert(batch.attention_mask.end(), input.attention_mask.begin(),
                                input.attention_mask.end());
    batch.nsp_labels.push_back(pair.is_next);
    ++batch.batch_size;
  }
  if (batch.batch_size == 0) {
    throw std::invalid_argument("batch has no usable pairs");
  }
  return batch;
}

TrainingSchedule compute_schedule(const std::vector<TokenizedDocument>& docs,
                                  const TrainConfig& config) {
  TrainingSchedule schedule;
  if (config.phase1.epochs > 0) {
    schedule.phase1_steps_per_epoch =
        epoch_instance_count(docs, config.phase1) / config.phase1.batch_size;
  }
  if (config.phase2.epochs > 0) {
    schedule.phase2_steps_per_epoch =
        epoch_instance_count(docs, config.phase2) / config.phase2.batch_size;
  }
  schedule.total_steps = schedule.phase1_steps_per_epoch * config.phase1.epochs +
                         schedule.phase2_steps_per_epoch * config.phase2.epochs;
  return schedule;
}

OptimizerState init_optimizer(const model::ModelConfig& config) {
  OptimizerState opt;
  opt.m = model::EncoderState<float>::zeros(config);
  opt.v = model::EncoderState<float>::zeros(config);
  opt.step = 0;
  return opt;
}

double learning_rate_at(int64_t global_step, const TrainConfig& config,
                        int64_t total_scheduled_steps) {
  if (global_step <= 0 || total_scheduled_steps <= 0) return 0.0;
  const int64_t warm = std::min(config.warmup_steps, total_scheduled_steps);
  if (warm > 0 && global_step <= warm) {
    return config.learning_rate * static_cast<double>(global_step) / static_cast<double>(warm);
  }
  if (global_step >= total_scheduled_steps || total_scheduled_steps == warm) return 0.0;
  return config.learning_rate *
         static_cast<double>(total_scheduled_steps - global_step) /
         static_cast<double>(total_scheduled_steps - warm);
}

StepInfo optimizer_step(model::EncoderState<float>* state,
                        const model::EncoderState<float>& grads, OptimizerState* opt,
                        const TrainConfig& config, double lr) {
  StepInfo info;
  info.lr = lr;
  auto grefs = grads.named_tensors();
  double norm_sq = 0.0;
  bool finite = true;
  for (const auto& g : grefs) {
    if (!g.tensor->allFinite()) finite = false;
    norm_sq += g.tensor->template cast<double>().squaredNorm();
  }
  info.grad_norm = std::sqrt(norm_sq);
  if (!finite || !std::isfinite(info.grad_norm)) {
    info.applied = false;
    return info;
  }
  float scale = 1.0f;
  if (config.gradient_clip_norm > 0 && info.grad_norm > config.gradient_clip_norm) {
    scale = static_cast<float>(config.gradient_clip_norm / info.grad_norm);
  }
  const int64_t t = opt->step + 1;
  const float bc1 = static_cast<float>(1.0 - std::pow(config.adam_beta1, t));
  const float bc2 = static_cast<float>(1.0 - std::pow(config.adam_beta2, t));
  const float b1 = static_cast<float>(config.adam_beta1);
  const float b2 = static_cast<float>(config.adam_beta2);
  const float eps = static_cast<float>(config.adam_epsilon);
  const float flr = static_cast<float>(lr);
  const float wd = static_cast<float>(config.weight_decay);

  auto prefs = state->named_tensors();
  auto mrefs = opt->m.named_tensors();
  auto vrefs = opt->v.named_tensors();
  for (size_t i = 0; i < prefs.size(); ++i) {
    auto p = prefs[i].tensor->array();
    auto g = (grefs[i].tensor->array() * scale).eval();
    auto& m = *mrefs[i].tensor;
    auto& v = *vrefs[i].tensor;
    m.array() = b1 * m.array() + (1.0f - b1) * g;
    v.array() = b2 * v.array() + (1.0f - b2) * g.square();
    auto update = ((m.array() / bc1) / ((v.array() / bc2).sqrt() + eps)).eval();
    if (prefs[i].weight_decay && wd > 0) update += wd * p;
    p -= flr * update;
  }
  opt->step = t;
  info.applied = true;
  return info;
}

namespace {

std::string checkpoint_name(int64_t global_step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt-%08lld", static_cast<long long>(global_step));
  return buf;
}

struct EvalTotals {
  double mlm_loss_sum = 0.0;
  double nsp_loss_sum = 0.0;
  int64_t steps = 0;
  int64_t mlm_correct = 0, mlm_count = 0;
  int64_t nsp_correct = 0, nsp_count = 0;

  void add(const model::LossBreakdown& loss) {
    mlm_loss_sum += loss.mlm_loss;
    nsp_loss_sum += loss.nsp_loss;
    ++steps;
    mlm_correct += loss.mlm_correct;
    mlm_count += loss.mlm_label_count;
    nsp_correct += loss.nsp_correct;
    nsp_count += loss.nsp_label_count;
  }
  double mlm_loss() const { return steps > 0 ? mlm_loss_sum / steps : 0.0; }
  double nsp_loss() const { return steps > 0 ? nsp_loss_sum / steps : 0.0; }
  double mlm_accuracy() const {
    return mlm_count > 0 ? static_cast<double>(mlm_correct) / mlm_count : 0.0;
  }
  double nsp_accuracy() const {
    return nsp_count > 0 ? static_cast<double>(nsp_correct) / nsp_count : 0.0;
  }
};

}  // namespace

PretrainResult pretrain(const std::vector<TokenizedDocument>& train_docs,
                        const std::vector<TokenizedDocument>& val_docs,
                        const tok::Vocabulary& vocab, const model::ModelConfig& model_config,
                        const TrainConfig& train_config, const PretrainOptions& options) {
  model_config.validate();
  train_config.validate(model_config);
  if (vocab.size() != model_config.vocab_size) {
    throw std::invalid_argument("vocabulary has " + std::to_string(vocab.size()) +
                                " tokens but the model expects " +
                                std::to_string(model_config.vocab_size));
  }
  if (options.checkpoint_dir.empty()) {
    throw std::invalid_argument("checkpoint_dir is required");
  }
  if (!nsp_feasible(train_docs)) {
    throw std::invalid_argument(
        "training corpus cannot support NSP pairs: need two non-empty documents and one "
        "document with two sentences");
  }
  const bool validate_epochs = nsp_feasible(val_docs);

  const uint64_t seed = train_config.rng_seed;
  const uint64_t val_seed = derive_seed(seed, {kTagValidation});
  const std::array<PhaseConfig, 2> phases = {train_config.phase1, train_config.phase2};
  std::array<int64_t, 2> steps_per_epoch{};
  int64_t total_scheduled = 0;
  for (int i = 0; i < 2; ++i) {
    if (phases[i].epochs == 0) continue;
    steps_per_epoch[i] = epoch_instance_count(train_docs, phases[i]) / phases[i].batch_size;
    total_scheduled += steps_per_epoch[i] * phases[i].epochs;
  }

  model::EncoderState<float> state;
  OptimizerState opt = init_optimizer(model_config);
  int start_phase = 1;
  int start_epoch = 1;
  int64_t start_step_in_epoch = 0;
  int64_t global_step = 0;
  bool resumed_mid_phase = false;

  PretrainResult result;
  if (options.resume) {
    const std::string latest = model::find_latest_checkpoint(options.checkpoint_dir);
    if (!latest.empty()) {
      model::LoadedCheckpoint loaded = model::load_checkpoint(latest);
      if (!(loaded.state.config == model_config)) {
        throw std::invalid_argument("checkpoint model config does not match the requested one");
      }
      if (loaded.meta.rng_seed != seed) {
        throw std::invalid_argument("checkpoint was trained with a different rng seed");
      }
      int phase_id = loaded.meta.phase_id;
      int completed = loaded.meta.completed_epochs;
      int64_t sie = loaded.meta.step_in_epoch;
      if (phase_id < 1 || phase_id > 2) {
        throw std::invalid_argument("checkpoint phase_id out of range");
      }
      if (sie >= steps_per_epoch[phase_id - 1] && steps_per_epoch[phase_id - 1] > 0) {
        ++completed;
        sie = 0;
      }
      if (completed >= phases[phase_id - 1].epochs && phase_id == 2) {
        result.final_checkpoint_dir = latest;
        return result;  // training already complete
      }
      state = std::move(loaded.state);
      global_step = loaded.meta.global_step;
      if (completed >= phases[phase_id - 1].epochs) {
        start_phase = phase_id + 1;
        start_epoch = 1;
        start_step_in_epoch = 0;
      } else {
        start_phase = phase_id;
        start_epoch = completed + 1;
        start_step_in_epoch = sie;
        if (loaded.optimizer.has_value()) {
          opt = std::move(*loaded.optimizer);
        }
        resumed_mid_phase = !(start_epoch == 1 && start_step_in_epoch == 0);
      }
    } else {
      state = model::init_model<float>(model_config, seed);
    }
  } else {
    state = model::init_model<float>(model_config, seed);
  }

  std::ofstream metrics;
  if (!options.metrics_path.empty()) {
    const fs::path parent = fs::path(options.metrics_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    metrics.open(options.metrics_path, std::ios::app);
    if (!metrics) {
      throw std::runtime_error("cannot open metrics log: " + options.metrics_path);
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto wall_time = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  int64_t last_saved_step = -1;
  auto save = [&](int phase_id, int completed_epochs, int64_t step_in_epoch) {
    model::PhaseMetadata meta;
    meta.phase_id = phase_id;
    meta.completed_epochs = completed_epochs;
    meta.step_in_epoch = step_in_epoch;
    meta.global_step = global_step;
    meta.rng_seed = seed;
    const std::string dir =
        (fs::path(options.checkpoint_dir) / checkpoint_name(global_step)).string();
    model::save_checkpoint(dir, state, meta, &opt);
    last_saved_step = global_step;
    return dir;
  };

  bool stop = false;
  for (int phase_id = start_phase; phase_id <= 2 && !stop; ++phase_id) {
    const PhaseConfig& phase = phases[phase_id - 1];
    if (!resumed_mid_phase) opt = init_optimizer(model_config);
    resumed_mid_phase = false;
    const int first_epoch = phase_id == start_phase ? start_epoch : 1;

    for (int epoch = first_epoch; epoch <= phase.epochs && !stop; ++epoch) {
      const std::vector<NspPair> instances = generate_epoch_instances(
          train_docs, phase, train_config.nsp_positive_rate, seed, phase_id, epoch);
      const int64_t spe = steps_per_epoch[phase_id - 1];
      const int64_t first_step =
          (phase_id == start_phase && epoch == start_epoch) ? start_step_in_epoch : 0;
      EvalTotals train_totals;
      int64_t done_through = first_step;

      for (int64_t s = first_step; s < spe && !stop; ++s) {
        Rng batch_rng(derive_seed(seed, {kTagBatch, static_cast<uint64_t>(phase_id),
                                         static_cast<uint64_t>(epoch),
                                         static_cast<uint64_t>(s)}));
        model::Batch batch = build_batch(
            instances, static_cast<size_t>(s) * phase.batch_size, phase.batch_size,
            phase.sequence_length, train_config.masking, vocab, batch_rng,
            &result.skipped_pairs);
        Rng dropout_rng(derive_seed(seed, {kTagDropout, static_cast<uint64_t>(phase_id),
                                           static_cast<uint64_t>(epoch),
                                           static_cast<uint64_t>(s)}));
        auto lag =
            model::loss_and_gradients<float>(state, batch, model::Mode::kTrain, &dropout_rng);
        ++global_step;
        const double lr = learning_rate_at(global_step, train_config, total_scheduled);
        const StepInfo step_info = optimizer_step(&state, lag.gradients, &opt, train_config, lr);
        if (!step_info.applied) ++result.rejected_steps;
        ++result.total_steps;
        done_through = s + 1;
        train_totals.add(lag.loss);

        StepRecord record;
        record.step = global_step;
        record.phase = phase_id;
        record.epoch = epoch;
        record.mlm_loss = lag.loss.mlm_loss;
        record.nsp_loss = lag.loss.nsp_loss;
        record.lr = lr;
        record.wall_time = wall_time();
        if (metrics.is_open()) {
          ordered_json j;
          j["step"] = record.step;
          j["phase"] = record.phase;
          j["epoch"] = record.epoch;
          j["mlm_loss"] = record.mlm_loss;
          j["nsp_loss"] = record.nsp_loss;
          j["lr"] = record.lr;
          j["wall_time"] = record.wall_time;
          metrics << j.dump() << "\n";
          metrics.flush();
        }
        if (options.step_callback) options.step_callback(record);
        if (train_config.checkpoint_every_n_steps > 0 &&
            global_step % train_config.checkpoint_every_n_steps == 0) {
          save(phase_id, epoch - 1, s + 1);
        }
        if (options.max_steps > 0 && result.total_steps >= options.max_steps) {
          stop = true;
          result.stopped_early = true;
        }
      }

      if (stop && done_through < spe) {
        // Interrupted mid-epoch: persist the exact position and bail out.
        if (last_saved_step != global_step) save(phase_id, epoch - 1, done_through);
        result.stopped_early = true;
        break;
      }

      EpochSummary summary;
      summary.phase = phase_id;
      summary.epoch = epoch;
      summary.global_step = global_step;
      summary.train_mlm_loss = train_totals.mlm_loss();
      summary.train_nsp_loss = train_totals.nsp_loss();
      summary.train_mlm_accuracy = train_totals.mlm_accuracy();
      summary.train_nsp_accuracy = train_totals.nsp_accuracy();
      if (validate_epochs) {
        const std::vector<NspPair> val_instances = generate_epoch_instances(
            val_docs, phase, train_config.nsp_positive_rate, val_seed, phase_id, epoch);
        EvalTotals val_totals;
        const int64_t val_steps =
            static_cast<int64_t>(val_instances.size()) / phase.batch_size;
        for (int64_t s = 0; s < val_steps; ++s) {
          Rng batch_rng(derive_seed(val_seed, {kTagBatch, static_cast<uint64_t>(phase_id),
                                               static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(s)}));
          int64_t ignored = 0;
          model::Batch batch = build_batch(
              val_instances, static_cast<size_t>(s) * phase.batch_size, phase.batch_size,
              phase.sequence_length, train_config.masking, vocab, batch_rng, &ignored);
          auto fwd = model::forward<float>(state, batch, model::Mode::kEval);
          val_totals.add(model::mlm_nsp_loss<float>(fwd.mlm_logits, fwd.nsp_logits, batch));
        }
        summary.val_mlm_loss = val_totals.mlm_loss();
        summary.val_nsp_loss = val_totals.nsp_loss();
        summary.val_mlm_accuracy = val_totals.mlm_accuracy();
        summary.val_nsp_accuracy = val_totals.nsp_accuracy();
      } else {
        summary.val_mlm_loss = std::numeric_limits<double>::quiet_NaN();
        summary.val_nsp_loss = std::numeric_limits<double>::quiet_NaN();
        summary.val_mlm_accuracy = std::numeric_limits<double>::quiet_NaN();
        summary.val_nsp_accuracy = std::numeric_limits<double>::quiet_NaN();
      }
      result.epochs.push_back(summary);
      if (metrics.is_open()) {
        ordered_json j;
        j["step"] = summary.global_step;
        j["phase"] = summary.phase;
        j["epoch"] = summary.epoch;
        j["split"] = "validation";
        j["mlm_loss"] = summary.val_mlm_loss;
        j["nsp_loss"] = summary.val_nsp_loss;
        j["mlm_accuracy"] = summary.val_mlm_accuracy;
        j["nsp_accuracy"] = summary.val_nsp_accuracy;
        j["wall_time"] = wall_time();
        metrics << j.dump() << "\n";
        metrics.flush();
      }
      if (options.epoch_callback && !options.epoch_callback(summary)) {
        stop = true;
        result.stopped_early = true;
      }
      if (stop && last_saved_step != global_step) {
        result.final_checkpoint_dir = save(phase_id, epoch, 0);
      }
    }

    if (!stop) {
      // Phase boundary checkpoint; after phase 2 this is the final state.
      result.final_checkpoint_dir = save(phase_id, phase.epochs, 0);
    }
  }
  if (result.stopped_early && result.final_checkpoint_dir.empty()) {
    result.final_checkpoint_dir =
        (fs::path(options.checkpoint_dir) / checkpoint_name(global_step)).string();
  }
  return result;
}

}  // namespace uzlm::train
