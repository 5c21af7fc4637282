// Acceptance gate: every release-blocking property of the pipeline, one
// doctest case per criterion, each printing a single PASS/FAIL line.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "test_util.hpp"
#include "uzlm/checkpoint.hpp"
#include "uzlm/cli.hpp"
#include "uzlm/corpus.hpp"
#include "uzlm/evaluation.hpp"
#include "uzlm/model.hpp"
#include "uzlm/morph.hpp"
#include "uzlm/rng.hpp"
#include "uzlm/tokenizer.hpp"
#include "uzlm/training.hpp"
#include "uzlm/unicode.hpp"

using namespace uzlm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void verdict(int id, const char* title, bool pass) {
  std::printf("ACCEPTANCE %2d %s: %s\n", id, title, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// ---------------------------------------------------------------------------
// 1. Parameter-count fidelity
// ---------------------------------------------------------------------------

// Closed-form parameter total, written independently of count_parameters:
// straight sum over the architecture as published, tied MLM decoder.
int64_t closed_form_parameters(const model::ModelConfig& c) {
  const int64_t V = c.vocab_size, H = c.hidden_size, F = c.ffn_size;
  const int64_t P = c.max_positions, S = c.segment_types, L = c.num_layers;
  int64_t total = 0;
  total += V * H + P * H + S * H;  // embeddings (decoder weight is tied)
  total += 2 * H;                  // embedding layer norm
  int64_t layer = 0;
  layer += 4 * (H * H + H);  // q, k, v, output projections
  layer += 2 * H;            // attention layer norm
  layer += H * F + F;        // ffn in
  layer += F * H + H;        // ffn out
  layer += 2 * H;            // ffn layer norm
  total += L * layer;
  total += H * H + H + 2 * H + V;  // mlm transform + norm + output bias
  total += H * H + H;              // pooler
  total += H * 2 + 2;              // nsp classifier
  return total;
}

TEST_CASE("criterion 1: parameter-count fidelity") {
  model::ModelConfig base;  // 12 layers, hidden 768, heads 12, ffn 3072,
                            // vocab 30000, positions 512, segments 2
  const int64_t counted = model::count_parameters(base);
  const int64_t closed = closed_form_parameters(base);
  const double deviation = std::abs(static_cast<double>(counted) - 110e6) / 110e6;
  const bool pass = counted == closed && deviation < 0.02;
  verdict(1, "parameter count matches the closed form and the ~110M figure", pass);
  CHECK(counted == closed);
  CHECK(deviation < 0.02);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness
// ---------------------------------------------------------------------------

TEST_CASE("criterion 2: analytic gradients match finite differences") {
  model::ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 8;
  c.num_heads = 2;
  c.ffn_size = 16;
  c.vocab_size = 11;
  c.max_positions = 8;
  c.segment_types = 2;
  c.dropout_rate = 0.0;
  auto state = model::init_model<double>(c, 7);

  model::Batch batch;
  batch.batch_size = 2;
  batch.seq_len = 6;
  batch.token_ids = {2, 5, 6, 4, 7, 3, 2, 8, 9, 3, 0, 0};
  batch.segment_ids = {0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0};
  batch.attention_mask = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
  batch.mlm_labels = {model::kIgnoreLabel, 10, model::kIgnoreLabel, model::kIgnoreLabel,
                      5,                   model::kIgnoreLabel, model::kIgnoreLabel,
                      model::kIgnoreLabel, 6,  model::kIgnoreLabel, model::kIgnoreLabel,
                      model::kIgnoreLabel};
  batch.nsp_labels = {1, 0};

  const auto analytic = model::loss_and_gradients(state, batch, model::Mode::kEval);
  auto grads = analytic.gradients.named_tensors();
  auto params = state.named_tensors();
  REQUIRE(grads.size() == params.size());

  const double eps = 1e-5;
  double max_rel = 0.0;
  int64_t coords = 0;
  bool pass = true;
  for (size_t t = 0; t < params.size(); ++t) {
    model::Mat<double>* w = params[t].tensor;
    const model::Mat<double>* g = grads[t].tensor;
    // At least 20 coordinates per tensor (every coordinate of small tensors).
    const Eigen::Index stride = std::max<Eigen::Index>(1, w->size() / 20);
    for (Eigen::Index i = 0; i < w->size(); i += stride) {
      const double original = w->data()[i];
      w->data()[i] = original + eps;
      const auto up = model::forward(state, batch, model::Mode::kEval);
      const double fp = model::mlm_nsp_loss(up.mlm_logits, up.nsp_logits, batch).total;
      w->data()[i] = original - eps;
      const auto dn = model::forward(state, batch, model::Mode::kEval);
      const double fm = model::mlm_nsp_loss(dn.mlm_logits, dn.nsp_logits, batch).total;
      w->data()[i] = original;
      ++coords;

      const double numeric = (fp - fm) / (2.0 * eps);
      const double exact = g->data()[i];
      const double abs_err = std::abs(numeric - exact);
      // Gradients below finite-difference resolution are judged absolutely.
      if (abs_err < 1e-9) continue;
      const double rel = abs_err / (std::abs(numeric) + std::abs(exact));
      max_rel = std::max(max_rel, rel);
      if (rel >= 1e-4) pass = false;
    }
  }
  verdict(2, "finite-difference gradient check on a 2-layer encoder", pass);
  MESSAGE("checked " << coords << " coordinates, max relative error " << max_rel);
  CHECK(max_rel < 1e-4);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 3. Overfit capability
// ---------------------------------------------------------------------------

TEST_CASE("criterion 3: a tiny model overfits a tiny corpus") {
  TempDir tmp;
  // Ten documents, five sentences each (50 sentences); document d repeats its
  // own two-letter word, so both objectives are fully learnable.
  std::vector<std::string> lexicon;
  std::vector<corpus::SentenceDocument> docs;
  std::vector<std::string> all_sentences;
  for (int d = 0; d < 10; ++d) {
    const std::string word(2, static_cast<char>('a' + d));
    lexicon.push_back(word);
    corpus::SentenceDocument doc;
    doc.id = "doc-" + std::to_string(d);
    for (int s = 0; s < 5; ++s) {
      std::string sentence = word;
      for (int w = 1; w < 6; ++w) sentence += " " + word;
      doc.sentences.push_back(sentence);
      all_sentences.push_back(sentence);
    }
    docs.push_back(std::move(doc));
  }

  tok::TokenizerConfig tcfg;
  tcfg.vocab_size = 500;
  const tok::Vocabulary vocab = tok::train_wordpiece(
      tok::count_word_frequencies(all_sentences), tcfg);
  REQUIRE(vocab.size() <= 500);
  const auto tokenized = train::tokenize_documents(docs, vocab, tcfg);

  model::ModelConfig mc;
  mc.num_layers = 2;
  mc.hidden_size = 64;
  mc.num_heads = 4;
  mc.ffn_size = 256;
  mc.vocab_size = vocab.size();
  mc.max_positions = 64;
  mc.dropout_rate = 0.0;  // training accuracy is the acceptance measure

  train::TrainConfig tc;
  tc.phase1 = {8, 16, 500};
  tc.phase2 = {1, 32, 0};
  tc.learning_rate = 2e-3;
  tc.warmup_steps = 20;
  tc.rng_seed = 7;

  double best_mlm = 0.0;
  double best_nsp = 0.0;
  int epochs_used = 0;
  train::PretrainOptions options;
  options.checkpoint_dir = tmp.str("ckpt");
  options.epoch_callback = [&](const train::EpochSummary& s) {
    best_mlm = std::max(best_mlm, s.train_mlm_accuracy);
    best_nsp = std::max(best_nsp, s.train_nsp_accuracy);
    epochs_used = s.epoch;
    return !(s.train_mlm_accuracy >= 0.97 && s.train_nsp_accuracy >= 0.97);
  };
  const auto result = train::pretrain(tokenized, {}, vocab, mc, tc, options);
  const bool trained = best_mlm >= 0.95 && best_nsp >= 0.95 && epochs_used <= 500;

  REQUIRE(!result.final_checkpoint_dir.empty());
  auto loaded = model::load_checkpoint(result.final_checkpoint_dir);
  const eval::CheckpointPredictor predictor(std::move(loaded.state), vocab, tcfg);

  int64_t scored = 0;
  int64_t top1_hits = 0;
  for (const std::string& word : lexicon) {
    const auto pieces = tok::encode_word(word, vocab, tcfg);
    if (pieces.size() != 1 || pieces[0] == tok::kUnkId) continue;  // multi-token gold
    const std::vector<std::string> window(12, word);
    for (const int masked_index : {0, 5, 11}) {
      const auto top = predictor.predict(window, masked_index, 1);
      ++scored;
      if (top.has_value() && !top->empty() && (*top)[0] == word) ++top1_hits;
    }
  }
  const bool predicts = scored > 0 &&
                        static_cast<double>(top1_hits) >= 0.9 * static_cast<double>(scored);
  const bool pass = trained && predicts;
  verdict(3, "overfits 50 sentences and recalls masked words at rank 1", pass);
  MESSAGE("mlm " << best_mlm << " nsp " << best_nsp << " epochs " << epochs_used
                 << " top1 " << top1_hits << "/" << scored);
  CHECK(best_mlm >= 0.95);
  CHECK(best_nsp >= 0.95);
  CHECK(epochs_used <= 500);
  CHECK(predicts);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 4. Masking statistics
// ---------------------------------------------------------------------------

TEST_CASE("criterion 4: masking statistics stay inside the published bounds") {
  tok::Vocabulary vocab;
  for (int i = 0; i < 995; ++i) vocab.add("t" + std::to_string(i));
  REQUIRE(vocab.size() == 1000);

  // 100,000 content tokens with [CLS]/[SEP] sprinkled every 50 positions.
  std::vector<int32_t> ids;
  ids.reserve(102200);
  ids.push_back(tok::kClsId);
  for (int i = 0; i < 100000; ++i) {
    ids.push_back(5 + (i * 37) % 995);
    if (i % 50 == 49) ids.push_back(tok::kSepId);
  }
  ids.push_back(tok::kSepId);

  train::MaskingPolicy policy;  // 0.15 / 0.80 / 0.10 / 0.10
  Rng rng(20240814);
  const train::MaskingResult res = train::apply_masking(ids, policy, vocab, rng);
  REQUIRE(res.corrupted.size() == ids.size());
  REQUIRE(res.labels.size() == ids.size());

  int64_t content = 0, selected = 0, masked = 0, kept = 0, randomized = 0;
  bool specials_clean = true;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (tok::Vocabulary::is_special_id(ids[i])) {
      if (res.labels[i] != model::kIgnoreLabel || res.corrupted[i] != ids[i]) {
        specials_clean = false;
      }
      continue;
    }
    ++content;
    if (res.labels[i] == model::kIgnoreLabel) continue;
    if (res.labels[i] != ids[i]) specials_clean = false;  // label must be the original
    ++selected;
    if (res.corrupted[i] == tok::kMaskId) {
      ++masked;
    } else if (res.corrupted[i] == ids[i]) {
      ++kept;
    } else {
      ++randomized;
    }
  }
  REQUIRE(content >= 100000);
  const double sel = static_cast<double>(selected) / static_cast<double>(content);
  const double mask_f = static_cast<double>(masked) / static_cast<double>(selected);
  const double rand_f = static_cast<double>(randomized) / static_cast<double>(selected);
  const double keep_f = static_cast<double>(kept) / static_cast<double>(selected);
  const bool pass = specials_clean && sel >= 0.14 && sel <= 0.16 && mask_f >= 0.78 &&
                    mask_f <= 0.82 && rand_f >= 0.08 && rand_f <= 0.12 && keep_f >= 0.08 &&
                    keep_f <= 0.12;
  verdict(4, "masking fractions over 100k tokens; specials never selected", pass);
  MESSAGE("selected " << sel << " mask " << mask_f << " random " << rand_f << " keep "
                      << keep_f);
  CHECK(specials_clean);
  CHECK(sel >= 0.14);
  CHECK(sel <= 0.16);
  CHECK(mask_f >= 0.78);
  CHECK(mask_f <= 0.82);
  CHECK(rand_f >= 0.08);
  CHECK(rand_f <= 0.12);
  CHECK(keep_f >= 0.08);
  CHECK(keep_f <= 0.12);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 5. Evaluation protocol invariants
// ---------------------------------------------------------------------------

TEST_CASE("criterion 5: evaluation protocol invariants") {
  std::vector<std::string> lexicon;
  for (int i = 0; i < 20; ++i) lexicon.push_back("word" + std::to_string(i));
  Rng text_rng(11);
  auto make_text = [&](int words) {
    std::string text;
    for (int i = 0; i < words; ++i) {
      if (i) text += ' ';
      text += lexicon[text_rng.uniform_int(lexicon.size())];
    }
    return text;
  };

  bool monotonic = true;
  bool oracle_hundred = true;
  bool adversarial_zero = true;
  {
    eval::EvalConfig cfg;
    cfg.window_words = 128;
    cfg.stride_words = 16;
    cfg.num_runs = 3;
    cfg.rng_seed = 5;
    const std::string text = make_text(1000);
    const eval::UniformPredictor uniform(lexicon, 99);
    const eval::OraclePredictor oracle;
    const eval::AdversarialPredictor adversarial;
    for (int run = 0; run < cfg.num_runs; ++run) {
      const auto wr = eval::make_eval_sequences(text, cfg, run);
      const auto u = eval::score_run(wr.sequences, uniform, cfg.top_ks);
      if (!(u.accuracy_percent.at(1) <= u.accuracy_percent.at(3) &&
            u.accuracy_percent.at(3) <= u.accuracy_percent.at(5))) {
        monotonic = false;
      }
      const auto o = eval::score_run(wr.sequences, oracle, cfg.top_ks);
      const auto a = eval::score_run(wr.sequences, adversarial, cfg.top_ks);
      for (const int k : cfg.top_ks) {
        if (o.accuracy_percent.at(k) != 100.0) oracle_hundred = false;
        if (a.accuracy_percent.at(k) != 0.0) adversarial_zero = false;
      }
    }
  }

  // Chance level: 10,000 sequences, candidates drawn from the same 20 words.
  bool chance_level = true;
  {
    eval::EvalConfig cfg;
    cfg.window_words = 128;
    cfg.stride_words = 1;
    cfg.num_runs = 1;
    cfg.rng_seed = 17;
    const std::string text = make_text(128 + 9999);
    const auto wr = eval::make_eval_sequences(text, cfg, 0);
    REQUIRE(wr.sequences.size() == 10000);
    const eval::UniformPredictor uniform(lexicon, 1234);
    const auto score = eval::score_run(wr.sequences, uniform, cfg.top_ks);
    for (const int k : cfg.top_ks) {
      const double p = static_cast<double>(k) / 20.0;
      const double sigma = 100.0 * std::sqrt(p * (1.0 - p) / 10000.0);
      const double expectation = 100.0 * p;
      if (std::abs(score.accuracy_percent.at(k) - expectation) > 3.0 * sigma) {
        chance_level = false;
      }
      MESSAGE("k=" << k << ": " << score.accuracy_percent.at(k) << " expected "
                   << expectation << " +/- " << 3.0 * sigma);
    }
  }

  const bool format_ok =
      eval::format_cell({64.0625, 0.64373907757724302}) == "64.06 (0.64%)" &&
      eval::format_cell({100.0, 0.0}) == "100.00 (0.00%)";
  const bool pass = monotonic && oracle_hundred && adversarial_zero && chance_level &&
                    format_ok;
  verdict(5, "top-k monotonicity, oracle/adversarial pins, chance level, cell format",
          pass);
  CHECK(monotonic);
  CHECK(oracle_hundred);
  CHECK(adversarial_zero);
  CHECK(chance_level);
  CHECK(format_ok);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 6. Windowing correctness
// ---------------------------------------------------------------------------

TEST_CASE("criterion 6: window counts and contents for every stride") {
  bool pass = true;
  for (const int n : {128, 129, 130, 131, 200, 255, 333, 512, 777, 1000}) {
    std::vector<std::string> words(n);
    std::string text;
    for (int i = 0; i < n; ++i) {
      words[i] = "w" + std::to_string(i);
      if (i) text += ' ';
      text += words[i];
    }
    for (int stride = 1; stride <= 128; ++stride) {
      eval::EvalConfig cfg;
      cfg.window_words = 128;
      cfg.stride_words = stride;
      cfg.num_runs = 1;
      cfg.rng_seed = 3;
      const auto wr = eval::make_eval_sequences(text, cfg, 0);
      const int64_t expected = (n - 128) / stride + 1;
      if (wr.windows_total != expected ||
          static_cast<int64_t>(wr.sequences.size()) != expected) {
        pass = false;
        continue;
      }
      for (size_t s = 0; s < wr.sequences.size(); ++s) {
        const auto& seq = wr.sequences[s];
        if (seq.words.size() != 128 || seq.masked_index < 0 || seq.masked_index >= 128 ||
            seq.window_offset != static_cast<int>(s) * stride) {
          pass = false;
          break;
        }
        for (int j = 0; j < 128; ++j) {
          if (seq.words[j] != words[seq.window_offset + j]) {
            pass = false;
            break;
          }
        }
      }
    }
  }
  verdict(6, "window count formula and exact 128-word contents, strides 1..128", pass);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 7. Tokenizer oracle equivalence
// ---------------------------------------------------------------------------

// Reference encoder: at each position take the longest vocabulary match and
// recurse; no backtracking across choices.
std::optional<std::vector<int>> longest_match(const std::vector<std::string>& chars,
                                              size_t pos, const tok::Vocabulary& vocab) {
  if (pos == chars.size()) return std::vector<int>{};
  for (size_t len = chars.size() - pos; len >= 1; --len) {
    std::string piece = pos == 0 ? "" : "##";
    for (size_t i = pos; i < pos + len; ++i) piece += chars[i];
    const auto id = vocab.id_of(piece);
    if (!id.has_value()) continue;
    auto rest = longest_match(chars, pos + len, vocab);
    if (!rest.has_value()) return std::nullopt;
    rest->insert(rest->begin(), *id);
    return rest;
  }
  return std::nullopt;
}

std::vector<int> reference_encode(const std::string& word, const tok::Vocabulary& vocab,
                                  const tok::TokenizerConfig& config) {
  const auto chars = unicode::utf8_characters(word);
  if (chars.empty() || static_cast<int>(chars.size()) > config.max_chars_per_word) {
    return {tok::kUnkId};
  }
  const auto ids = longest_match(chars, 0, vocab);
  return ids.has_value() ? *ids : std::vector<int>{tok::kUnkId};
}

TEST_CASE("criterion 7: tokenizer equivalence, round trip, determinism") {
  // a) greedy encoder vs the brute-force reference on 1,000 random instances.
  bool equivalent = true;
  {
    Rng rng(20240814);
    tok::TokenizerConfig config;
    const std::vector<std::string> alphabet = {"а", "б", "в", "г", "д"};
    for (int instance = 0; instance < 1000; ++instance) {
      tok::Vocabulary v;
      const int entries = 1 + static_cast<int>(rng.uniform_int(10));
      for (int e = 0; e < entries; ++e) {
        std::string t = rng.bernoulli(0.5) ? "##" : "";
        const int len = 1 + static_cast<int>(rng.uniform_int(3));
        for (int c = 0; c < len; ++c) t += alphabet[rng.uniform_int(alphabet.size())];
        if (!v.contains(t)) v.add(t);
      }
      std::string word;
      const int len = 1 + static_cast<int>(rng.uniform_int(12));
      for (int c = 0; c < len; ++c) word += alphabet[rng.uniform_int(alphabet.size())];
      if (tok::encode_word(word, v, config) != reference_encode(word, v, config)) {
        equivalent = false;
      }
    }
  }

  // b) decode(encode(word)) round-trips every non-[UNK] word of the training
  //    lexicon, and c) training is byte-deterministic.
  const std::vector<std::string> lexicon = {
      "уй",      "уйда",     "уйдаги",  "уйдагилар", "китоб",  "китоблар",
      "мактаб",  "мактабда", "бола",    "болалар",   "сув",    "сувлар",
      "катта",   "кичик",    "янги",    "яхши",      "дарахт", "дарахтлар",
      "шаҳар",   "шаҳарда",  "одам",    "одамлар",   "кун",    "кунлар"};
  tok::WordFrequencies freqs;
  for (size_t i = 0; i < lexicon.size(); ++i) {
    freqs[lexicon[i]] = 5 + static_cast<int64_t>(i) * 3;
  }
  tok::TokenizerConfig tcfg;
  tcfg.vocab_size = 200;
  tcfg.min_pair_frequency = 1;
  const tok::Vocabulary vocab = tok::train_wordpiece(freqs, tcfg);

  bool round_trips = true;
  int covered = 0;
  for (const auto& [word, count] : freqs) {
    const auto ids = tok::encode_word(word, vocab, tcfg);
    if (std::find(ids.begin(), ids.end(), tok::kUnkId) != ids.end()) continue;
    ++covered;
    if (tok::decode(ids, vocab) != word) round_trips = false;
  }

  TempDir tmp;
  const tok::Vocabulary again = tok::train_wordpiece(freqs, tcfg);
  vocab.save(tmp.str("a.txt"), {});
  again.save(tmp.str("b.txt"), {});
  const bool deterministic = read_bytes(tmp.str("a.txt")) == read_bytes(tmp.str("b.txt"));

  const bool pass = equivalent && round_trips && covered > 0 && deterministic;
  verdict(7, "greedy == brute force, lexicon round trip, deterministic training", pass);
  MESSAGE("round-tripped " << covered << "/" << lexicon.size() << " lexicon words");
  CHECK(equivalent);
  CHECK(round_trips);
  CHECK(covered > 0);
  CHECK(deterministic);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 8. Two-phase schedule integrity
// ---------------------------------------------------------------------------

TEST_CASE("criterion 8: phase-1 checkpoint feeds phase 2; resume is exact") {
  TempDir tmp;
  const std::vector<std::string> lexicon = {"ab", "cd", "ef", "gh", "ij", "kl",
                                            "mn", "op", "qr", "st", "uv", "wx"};
  std::vector<corpus::SentenceDocument> docs;
  std::vector<std::string> all_sentences;
  for (int d = 0; d < 4; ++d) {
    corpus::SentenceDocument doc;
    doc.id = "doc-" + std::to_string(d);
    for (int s = 0; s < 6; ++s) {
      std::string sentence;
      for (int w = 0; w < 8; ++w) {
        if (w) sentence += ' ';
        sentence += lexicon[(d * 7 + s * 3 + w) % lexicon.size()];
      }
      doc.sentences.push_back(sentence);
      all_sentences.push_back(sentence);
    }
    docs.push_back(std::move(doc));
  }
  tok::TokenizerConfig tcfg;
  tcfg.vocab_size = 100;
  const tok::Vocabulary vocab = tok::train_wordpiece(
      tok::count_word_frequencies(all_sentences), tcfg);
  const auto tokenized = train::tokenize_documents(docs, vocab, tcfg);

  model::ModelConfig mc;
  mc.num_layers = 1;
  mc.hidden_size = 16;
  mc.num_heads = 2;
  mc.ffn_size = 32;
  mc.vocab_size = vocab.size();
  mc.max_positions = 512;

  train::TrainConfig tc;
  tc.phase1 = {4, 16, 1};
  tc.phase2 = {2, 512, 1};
  tc.learning_rate = 1e-3;
  tc.warmup_steps = 2;
  tc.rng_seed = 99;

  const train::TrainingSchedule schedule = train::compute_schedule(tokenized, tc);
  REQUIRE(schedule.phase1_steps_per_epoch > 0);
  REQUIRE(schedule.phase2_steps_per_epoch > 0);

  // Straight run.
  train::PretrainOptions straight;
  straight.checkpoint_dir = tmp.str("straight");
  const auto full = train::pretrain(tokenized, {}, vocab, mc, tc, straight);
  REQUIRE(!full.stopped_early);

  // Interrupted exactly at the phase boundary, then resumed.
  train::PretrainOptions interrupt;
  interrupt.checkpoint_dir = tmp.str("resumed");
  interrupt.max_steps = schedule.phase1_steps_per_epoch * tc.phase1.epochs;
  const auto partial = train::pretrain(tokenized, {}, vocab, mc, tc, interrupt);
  REQUIRE(partial.stopped_early);

  auto phase1_ckpt = model::load_checkpoint(partial.final_checkpoint_dir);
  const bool phase1_final = phase1_ckpt.meta.phase_id == 1 &&
                            phase1_ckpt.meta.completed_epochs == tc.phase1.epochs;

  // The phase-1 parameters must drive a full 512-token phase-2 batch.
  const auto phase2_pairs = train::generate_epoch_instances(
      tokenized, tc.phase2, tc.nsp_positive_rate, tc.rng_seed, 2, 1);
  REQUIRE(!phase2_pairs.empty());
  Rng batch_rng(4);
  int64_t skipped = 0;
  const model::Batch long_batch =
      train::build_batch(phase2_pairs, 0, tc.phase2.batch_size, tc.phase2.sequence_length,
                         tc.masking, vocab, batch_rng, &skipped);
  const auto fwd = model::forward(phase1_ckpt.state, long_batch, model::Mode::kEval);
  const bool forwards = long_batch.seq_len == 512 && fwd.mlm_logits.allFinite() &&
                        fwd.nsp_logits.allFinite();

  train::PretrainOptions resume;
  resume.checkpoint_dir = tmp.str("resumed");
  resume.resume = true;
  const auto resumed = train::pretrain(tokenized, {}, vocab, mc, tc, resume);
  REQUIRE(!resumed.stopped_early);

  const std::string straight_dir = model::find_latest_checkpoint(tmp.str("straight"));
  const std::string resumed_dir = model::find_latest_checkpoint(tmp.str("resumed"));
  const bool identical =
      read_bytes(straight_dir + "/params.bin") == read_bytes(resumed_dir + "/params.bin") &&
      read_bytes(straight_dir + "/optim.bin") == read_bytes(resumed_dir + "/optim.bin");

  const bool pass = phase1_final && forwards && identical;
  verdict(8, "512-token phase 2 from the phase-1 checkpoint; exact resume", pass);
  CHECK(phase1_final);
  CHECK(forwards);
  CHECK(identical);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 9. Morphological fixtures
// ---------------------------------------------------------------------------

TEST_CASE("criterion 9: morphological segmentation fixtures") {
  const morph::SuffixFsm fsm = morph::default_suffix_fsm();
  bool pass = true;

  const auto first = morph::segment_morph("менинг", fsm);
  pass = pass && first.has_value() &&
         first->morphemes == std::vector<std::string>{"мен", "нинг"};

  const auto second = morph::segment_morph("ютганларданмисиз", fsm);
  pass = pass && second.has_value() &&
         second->morphemes ==
             std::vector<std::string>{"ют", "ган", "лар", "дан", "ми", "сиз"};

  for (int n = 1; n <= 3; ++n) {
    std::string word = "уй";
    std::vector<std::string> expected = {"уй"};
    for (int r = 0; r < n; ++r) {
      word += "дагилар";
      expected.insert(expected.end(), {"да", "ги", "лар"});
    }
    const auto parse = morph::segment_morph(word, fsm);
    pass = pass && parse.has_value() && parse->morphemes == expected;
  }
  verdict(9, "exact stem+suffix segmentations incl. the unbounded suffix cycle", pass);
  CHECK(pass);
}

// ---------------------------------------------------------------------------
// 10. Pipeline determinism
// ---------------------------------------------------------------------------

TEST_CASE("criterion 10: the full pipeline is bit-reproducible") {
  TempDir tmp;
  const std::string src = UZLM_SOURCE_DIR;
  json cfg = json::parse(read_bytes(src + "/configs/desk.json"));
  cfg["paths"]["raw_dir"] = src + "/data/desk_corpus";
  cfg["paths"]["abbreviations"] = src + "/data/abbreviations_uz.txt";
  for (auto& dataset : cfg["paths"]["eval_datasets"]) {
    dataset["path"] = src + "/data/" + std::string("desk_eval/") +
                      fs::path(dataset["path"].get<std::string>()).filename().string();
  }

  bool commands_ok = true;
  auto run_pipeline = [&](const std::string& work_dir) {
    cfg["paths"]["work_dir"] = work_dir;
    const std::string config_path = work_dir + "-config.json";
    std::ofstream(config_path, std::ios::binary) << cfg.dump(2) << "\n";
    for (const char* command : {"corpus-prepare", "tokenizer-train", "pretrain", "evaluate"}) {
      const int code = cli::run(
          {command, "--config", config_path, "--seed", "42", "--deterministic"});
      if (code != 0) commands_ok = false;
    }
    return read_bytes(work_dir + "/eval/report.json");
  };

  const std::string first = run_pipeline(tmp.str("run1"));
  const std::string second = run_pipeline(tmp.str("run2"));
  const bool pass = commands_ok && !first.empty() && first == second;
  verdict(10, "two end-to-end runs produce byte-identical evaluation reports", pass);
  CHECK(commands_ok);
  CHECK(first == second);
  CHECK(pass);
}

}  // namespace
