#include "uzlm/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <stdexcept>

#include "uzlm/rng.hpp"

namespace uzlm::eval {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr uint64_t kTagMaskChoice = 0x03a5;

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

uint64_t hash_context(const std::vector<std::string>& words, int masked_index) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix_byte = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (size_t i = 0; i < words.size(); ++i) {
    if (static_cast<int>(i) == masked_index) continue;  // the gold slot stays hidden
    for (const char c : words[i]) mix_byte(static_cast<unsigned char>(c));
    mix_byte(0xff);
  }
  return h;
}

}  // namespace

void EvalConfig::validate() const {
  if (window_words < 1) throw std::invalid_argument("window_words must be >= 1");
  if (stride_words < 1 || stride_words > window_words) {
    throw std::invalid_argument("stride_words must lie in [1, window_words]");
  }
  if (top_ks.empty()) throw std::invalid_argument("top_ks must not be empty");
  int prev = 0;
  for (const int k : top_ks) {
    if (k <= prev) throw std::invalid_argument("top_ks must be strictly increasing and >= 1");
    prev = k;
  }
  if (num_runs < 1) throw std::invalid_argument("num_runs must be >= 1");
}

WindowingResult make_eval_sequences(const std::string& text, const EvalConfig& config,
                                    int run_index, const WordPredicate& maskable) {
  config.validate();
  if (run_index < 0) throw std::invalid_argument("run_index must be >= 0");
  const std::vector<std::string> words = split_words(text);
  const int n = static_cast<int>(words.size());
  if (n < config.window_words) {
    throw std::invalid_argument("text has " + std::to_string(n) +
                                " words, shorter than one window of " +
                                std::to_string(config.window_words));
  }
  WindowingResult result;
  for (int offset = 0; offset + config.window_words <= n; offset += config.stride_words) {
    ++result.windows_total;
    std::vector<int> candidates;
    for (int i = 0; i < config.window_words; ++i) {
      if (!maskable || maskable(words[offset + i])) candidates.push_back(i);
    }
    if (candidates.empty()) {
      ++result.windows_unmaskable;
      continue;
    }
    Rng rng(derive_seed(config.rng_seed, {kTagMaskChoice, static_cast<uint64_t>(run_index),
                                          static_cast<uint64_t>(offset)}));
    EvalSequence seq;
    seq.window_offset = offset;
    seq.words.assign(words.begin() + offset, words.begin() + offset + config.window_words);
    seq.masked_index = candidates[rng.uniform_int(candidates.size())];
    result.sequences.push_back(std::move(seq));
  }
  return result;
}

RunScore score_run(const std::vector<EvalSequence>& sequences, const Predictor& predictor,
                   const std::vector<int>& top_ks) {
  if (top_ks.empty()) throw std::invalid_argument("top_ks must not be empty");
  const int max_k = *std::max_element(top_ks.begin(), top_ks.end());
  RunScore score;
  for (const int k : top_ks) score.matches[k] = 0;
  for (const EvalSequence& seq : sequences) {
    const auto candidates = predictor.predict(seq.words, seq.masked_index, max_k);
    if (!candidates.has_value()) {
      ++score.skipped;
      continue;
    }
    ++score.scored;
    int hit_rank = -1;
    for (size_t i = 0; i < candidates->size() && i < static_cast<size_t>(max_k); ++i) {
      if ((*candidates)[i] == seq.gold()) {
        hit_rank = static_cast<int>(i);
        break;
      }
    }
    if (hit_rank >= 0) {
      for (const int k : top_ks) {
        if (hit_rank < k) ++score.matches[k];
      }
    }
  }
  if (score.scored == 0) {
    throw std::runtime_error("no scorable sequences: every window was skipped");
  }
  for (const int k : top_ks) {
    score.accuracy_percent[k] =
        100.0 * static_cast<double>(score.matches[k]) / static_cast<double>(score.scored);
  }
  return score;
}

Aggregate aggregate_runs(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate_runs needs at least one value");
  Aggregate agg;
  agg.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
  double var = 0.0;
  for (const double v : values) var += (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return agg;
}

std::string format_cell(const Aggregate& aggregate) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f (%.2f%%)", aggregate.mean, aggregate.stddev);
  return buf;
}

EvalReport run_evaluation(const std::vector<EvalDataset>& datasets,
                          const std::vector<const Predictor*>& predictors,
                          const EvalConfig& config, const WordPredicate& maskable) {
  config.validate();
  if (datasets.empty()) throw std::invalid_argument("evaluation needs at least one dataset");
  if (predictors.empty()) throw std::invalid_argument("evaluation needs at least one predictor");
  {
    std::set<std::string> names;
    for (const auto& d : datasets) {
      if (!names.insert(d.name).second) {
        throw std::invalid_argument("duplicate dataset name: " + d.name);
      }
    }
    names.clear();
    for (const Predictor* p : predictors) {
      if (!names.insert(p->name()).second) {
        throw std::invalid_argument("duplicate predictor name: " + p->name());
      }
    }
  }

  EvalReport report;
  report.config = config;
  for (const Predictor* p : predictors) report.predictors.push_back(p->name());
  for (const EvalDataset& dataset : datasets) {
    report.datasets.push_back(dataset.name);
    std::vector<WindowingResult> runs;
    runs.reserve(config.num_runs);
    for (int r = 0; r < config.num_runs; ++r) {
      runs.push_back(make_eval_sequences(dataset.text, config, r, maskable));
    }
    report.sequence_counts.push_back({dataset.name, runs[0].windows_total,
                                      runs[0].windows_unmaskable,
                                      static_cast<int64_t>(runs[0].sequences.size())});
    for (const Predictor* p : predictors) {
      std::map<int, std::vector<double>> per_run;
      for (int r = 0; r < config.num_runs; ++r) {
        const RunScore rs = score_run(runs[r].sequences, *p, config.top_ks);
        report.skip_counts.push_back({dataset.name, p->name(), r, rs.scored, rs.skipped});
        for (const auto& [k, acc] : rs.accuracy_percent) per_run[k].push_back(acc);
      }
      for (const int k : config.top_ks) {
        const Aggregate agg = aggregate_runs(per_run[k]);
        report.cells.push_back({dataset.name, p->name(), k, agg.mean, agg.stddev, per_run[k]});
      }
    }
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["config"]["window_words"] = report.config.window_words;
  j["config"]["stride_words"] = report.config.stride_words;
  j["config"]["top_ks"] = report.config.top_ks;
  j["config"]["num_runs"] = report.config.num_runs;
  j["config"]["rng_seed"] = report.config.rng_seed;
  j["datasets"] = report.datasets;
  j["predictors"] = report.predictors;
  j["cells"] = ordered_json::array();
  for (const ReportCell& cell : report.cells) {
    ordered_json c;
    c["dataset"] = cell.dataset;
    c["predictor"] = cell.predictor;
    c["k"] = cell.k;
    c["mean"] = cell.mean;
    c["stddev"] = cell.stddev;
    c["per_run"] = cell.per_run;
    j["cells"].push_back(c);
  }
  j["sequence_counts"] = ordered_json::array();
  for (const auto& sc : report.sequence_counts) {
    ordered_json c;
    c["dataset"] = sc.dataset;
    c["windows_total"] = sc.windows_total;
    c["windows_unmaskable"] = sc.windows_unmaskable;
    c["sequences"] = sc.sequences;
    j["sequence_counts"].push_back(c);
  }
  j["skip_counts"] = ordered_json::array();
  for (const auto& sk : report.skip_counts) {
    ordered_json c;
    c["dataset"] = sk.dataset;
    c["predictor"] = sk.predictor;
    c["run"] = sk.run;
    c["scored"] = sk.scored;
    c["skipped"] = sk.skipped;
    j["skip_counts"].push_back(c);
  }
  return j.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  std::vector<std::string> headers = {"Model", "Evaluation dataset"};
  for (const int k : report.config.top_ks) {
    headers.push_back("Top " + std::to_string(k) + " Match");
  }
  // Rows follow the cells layout: dataset-major, predictor within.
  std::vector<std::vector<std::string>> rows;
  for (const std::string& dataset : report.datasets) {
    for (const std::string& predictor : report.predictors) {
      std::vector<std::string> row = {predictor, dataset};
      for (const int k : report.config.top_ks) {
        for (const ReportCell& cell : report.cells) {
          if (cell.dataset == dataset && cell.predictor == predictor && cell.k == k) {
            row.push_back(format_cell({cell.mean, cell.stddev}));
          }
        }
      }
      rows.push_back(std::move(row));
    }
  }
  std::vector<size_t> widths(headers.size(), 0);
  for (size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  auto append_row = [&out, &widths](const std::vector<std::string>& row) {
    for (size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out.append(widths[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  };
  append_row(headers);
  for (const auto& row : rows) append_row(row);
  return out;
}

CheckpointPredictor::CheckpointPredictor(model::EncoderState<float> state, tok::Vocabulary vocab,
                                         tok::TokenizerConfig tok_config, Policy policy,
                                         std::string name)
    : state_(std::move(state)),
      vocab_(std::move(vocab)),
      tok_config_(std::move(tok_config)),
      policy_(policy),
      name_(std::move(name)) {
  if (vocab_.size() != state_.config.vocab_size) {
    throw std::invalid_argument("vocabulary size does not match the checkpoint vocab_size");
  }
}

std::optional<std::vector<std::string>> CheckpointPredictor::predict(
    const std::vector<std::string>& words, int masked_index, int k) const {
  if (masked_index < 0 || masked_index >= static_cast<int>(words.size())) {
    throw std::invalid_argument("masked_index out of range");
  }
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<std::vector<int>> pieces(words.size());
  for (size_t i = 0; i < words.size(); ++i) {
    pieces[i] = tok::encode_word(words[i], vocab_, tok_config_);
  }
  const size_t gold_pieces = pieces[masked_index].size();
  int n_mask;
  if (policy_ == Policy::kSingleTokenOnly) {
    if (gold_pieces != 1) return std::nullopt;
    n_mask = 1;
  } else {
    n_mask = static_cast<int>(gold_pieces);
  }

  std::vector<int> stream;
  int mask_begin = -1;
  for (size_t i = 0; i < words.size(); ++i) {
    if (static_cast<int>(i) == masked_index) {
      mask_begin = static_cast<int>(stream.size());
      stream.insert(stream.end(), n_mask, tok::kMaskId);
    } else {
      stream.insert(stream.end(), pieces[i].begin(), pieces[i].end());
    }
  }
  const int budget = state_.config.max_positions - 2;
  if (n_mask > budget) return std::nullopt;
  if (static_cast<int>(stream.size()) > budget) {
    // Symmetric crop around the masked span.
    int lo = mask_begin + n_mask / 2 - budget / 2;
    lo = std::min(lo, mask_begin);
    lo = std::max(lo, mask_begin + n_mask - budget);
    lo = std::max(0, std::min(lo, static_cast<int>(stream.size()) - budget));
    stream = std::vector<int>(stream.begin() + lo, stream.begin() + lo + budget);
    mask_begin -= lo;
  }

  model::Batch batch;
  batch.batch_size = 1;
  batch.seq_len = static_cast<int>(stream.size()) + 2;
  batch.token_ids.push_back(tok::kClsId);
  for (const int id : stream) batch.token_ids.push_back(id);
  batch.token_ids.push_back(tok::kSepId);
  batch.segment_ids.assign(batch.seq_len, 0);
  batch.attention_mask.assign(batch.seq_len, 1);
  batch.mlm_labels.assign(batch.seq_len, model::kIgnoreLabel);
  batch.nsp_labels.assign(1, model::kIgnoreLabel);

  const model::ForwardResult<float> fwd =
      model::forward<float>(state_, batch, model::Mode::kEval);

  if (policy_ == Policy::kSingleTokenOnly) {
    const Eigen::Index row = 1 + mask_begin;
    std::vector<int> ids;
    ids.reserve(vocab_.size());
    for (int id = tok::kNumSpecialTokens; id < vocab_.size(); ++id) {
      if (!tok::Vocabulary::is_continuation(vocab_.token(id))) ids.push_back(id);
    }
    const auto better = [&fwd, row](int a, int b) {
      const float la = fwd.mlm_logits(row, a);
      const float lb = fwd.mlm_logits(row, b);
      if (la != lb) return la > lb;
      return a < b;
    };
    const size_t take = std::min<size_t>(static_cast<size_t>(k), ids.size());
    std::partial_sort(ids.begin(), ids.begin() + take, ids.end(), better);
    std::vector<std::string> out;
    for (size_t i = 0; i < take; ++i) out.push_back(vocab_.token(ids[i]));
    return out;
  }

  // kAllPieces: per-position argmax, continuation-form after the first piece.
  std::string word;
  for (int j = 0; j < n_mask; ++j) {
    const Eigen::Index row = 1 + mask_begin + j;
    int best = -1;
    float best_logit = 0;
    for (int id = tok::kNumSpecialTokens; id < vocab_.size(); ++id) {
      const bool cont = tok::Vocabulary::is_continuation(vocab_.token(id));
      if (cont != (j > 0)) continue;
      const float logit = fwd.mlm_logits(row, id);
      if (best < 0 || logit > best_logit || (logit == best_logit && id < best)) {
        best = id;
        best_logit = logit;
      }
    }
    if (best < 0) return std::nullopt;
    const std::string& piece = vocab_.token(best);
    word += j > 0 ? piece.substr(tok::Vocabulary::is_continuation(piece) ? 2 : 0) : piece;
  }
  return std::vector<std::string>{word};
}

std::optional<std::vector<std::string>> OraclePredictor::predict(
    const std::vector<std::string>& words, int masked_index, int /*k*/) const {
  return std::vector<std::string>{words[masked_index]};
}

std::optional<std::vector<std::string>> AdversarialPredictor::predict(
    const std::vector<std::string>& /*words*/, int /*masked_index*/, int k) const {
  // Embedded spaces make these impossible as whitespace-delimited words.
  std::vector<std::string> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back("no match " + std::to_string(i));
  return out;
}

UniformPredictor::UniformPredictor(std::vector<std::string> words, uint64_t seed)
    : words_(std::move(words)), seed_(seed) {
  if (words_.empty()) throw std::invalid_argument("UniformPredictor needs a non-empty word list");
}

std::optional<std::vector<std::string>> UniformPredictor::predict(
    const std::vector<std::string>& words, int masked_index, int k) const {
  Rng rng(derive_seed(seed_, {hash_context(words, masked_index),
                              static_cast<uint64_t>(masked_index)}));
  std::vector<size_t> order(words_.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::string> out;
  const size_t take = std::min<size_t>(static_cast<size_t>(k), order.size());
  for (size_t i = 0; i < take; ++i) out.push_back(words_[order[i]]);
  return out;
}

}  // namespace uzlm::eval
