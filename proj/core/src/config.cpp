#include "uzlm/config.hpp"

#include <fstream>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace uzlm::config {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::invalid_argument("config error at " + where + ": " + what);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(where, "expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      std::string hint;
      for (const char* k : allowed) {
        hint += hint.empty() ? "" : ", ";
        hint += k;
      }
      fail(where, "unknown key '" + item.key() + "' (known keys: " + hint + ")");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T* out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    *out = it->get<T>();
  } catch (const json::exception&) {
    fail(where + "." + key, "wrong type");
  }
}

const json* subsection(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void parse_paths(const json& j, PathsConfig* out) {
  check_keys(j, "paths", {"raw_dir", "work_dir", "abbreviations", "eval_datasets"});
  read(j, "raw_dir", &out->raw_dir, "paths");
  read(j, "work_dir", &out->work_dir, "paths");
  read(j, "abbreviations", &out->abbreviations, "paths");
  if (const json* ds = subsection(j, "eval_datasets")) {
    if (!ds->is_array()) fail("paths.eval_datasets", "expected an array");
    out->eval_datasets.clear();
    for (size_t i = 0; i < ds->size(); ++i) {
      const json& entry = (*ds)[i];
      const std::string where = "paths.eval_datasets[" + std::to_string(i) + "]";
      check_keys(entry, where, {"name", "path"});
      EvalDatasetSpec spec;
      read(entry, "name", &spec.name, where);
      read(entry, "path", &spec.path, where);
      if (spec.name.empty() || spec.path.empty()) fail(where, "name and path are required");
      out->eval_datasets.push_back(std::move(spec));
    }
  }
}

void parse_tokenizer(const json& j, tok::TokenizerConfig* out) {
  check_keys(j, "tokenizer",
             {"vocab_size", "lowercase", "max_chars_per_word", "min_pair_frequency"});
  read(j, "vocab_size", &out->vocab_size, "tokenizer");
  read(j, "lowercase", &out->lowercase, "tokenizer");
  read(j, "max_chars_per_word", &out->max_chars_per_word, "tokenizer");
  read(j, "min_pair_frequency", &out->min_pair_frequency, "tokenizer");
}

void parse_model(const json& j, model::ModelConfig* out) {
  check_keys(j, "model",
             {"num_layers", "hidden_size", "num_heads", "ffn_size", "vocab_size",
              "max_positions", "segment_types", "dropout_rate", "activation",
              "initializer_stddev"});
  read(j, "vocab_size", &out->vocab_size, "model");
  read(j, "num_layers", &out->num_layers, "model");
  read(j, "hidden_size", &out->hidden_size, "model");
  read(j, "num_heads", &out->num_heads, "model");
  read(j, "ffn_size", &out->ffn_size, "model");
  read(j, "max_positions", &out->max_positions, "model");
  read(j, "segment_types", &out->segment_types, "model");
  read(j, "dropout_rate", &out->dropout_rate, "model");
  read(j, "activation", &out->activation, "model");
  read(j, "initializer_stddev", &out->initializer_stddev, "model");
}

void parse_phase(const json& j, const std::string& where, train::PhaseConfig* out) {
  check_keys(j, where, {"batch_size", "sequence_length", "epochs"});
  read(j, "batch_size", &out->batch_size, where);
  read(j, "sequence_length", &out->sequence_length, where);
  read(j, "epochs", &out->epochs, where);
}

void parse_masking(const json& j, train::MaskingPolicy* out) {
  check_keys(j, "training.masking",
             {"select_rate", "mask_fraction", "random_fraction", "keep_fraction"});
  read(j, "select_rate", &out->select_rate, "training.masking");
  read(j, "mask_fraction", &out->mask_fraction, "training.masking");
  read(j, "random_fraction", &out->random_fraction, "training.masking");
  read(j, "keep_fraction", &out->keep_fraction, "training.masking");
}

void parse_training(const json& j, train::TrainConfig* out) {
  check_keys(j, "training",
             {"phase1", "phase2", "learning_rate", "warmup_steps", "weight_decay",
              "adam_beta1", "adam_beta2", "adam_epsilon", "gradient_clip_norm",
              "nsp_positive_rate", "checkpoint_every_n_steps", "rng_seed", "masking"});
  read(j, "rng_seed", &out->rng_seed, "training");
  if (const json* p = subsection(j, "phase1")) parse_phase(*p, "training.phase1", &out->phase1);
  if (const json* p = subsection(j, "phase2")) parse_phase(*p, "training.phase2", &out->phase2);
  read(j, "learning_rate", &out->learning_rate, "training");
  read(j, "warmup_steps", &out->warmup_steps, "training");
  read(j, "weight_decay", &out->weight_decay, "training");
  read(j, "adam_beta1", &out->adam_beta1, "training");
  read(j, "adam_beta2", &out->adam_beta2, "training");
  read(j, "adam_epsilon", &out->adam_epsilon, "training");
  read(j, "gradient_clip_norm", &out->gradient_clip_norm, "training");
  read(j, "nsp_positive_rate", &out->nsp_positive_rate, "training");
  read(j, "checkpoint_every_n_steps", &out->checkpoint_every_n_steps, "training");
  if (const json* m = subsection(j, "masking")) parse_masking(*m, &out->masking);
}

void parse_evaluation(const json& j, eval::EvalConfig* out) {
  check_keys(j, "evaluation",
             {"window_words", "stride_words", "top_ks", "num_runs", "rng_seed"});
  read(j, "rng_seed", &out->rng_seed, "evaluation");
  read(j, "window_words", &out->window_words, "evaluation");
  read(j, "stride_words", &out->stride_words, "evaluation");
  read(j, "top_ks", &out->top_ks, "evaluation");
  read(j, "num_runs", &out->num_runs, "evaluation");
}

void parse_corpus(const json& j, CorpusSection* out) {
  check_keys(j, "corpus", {"validation_fraction"});
  read(j, "validation_fraction", &out->validation_fraction, "corpus");
}

}  // namespace

void PipelineConfig::sync_derived_fields() {
  model.vocab_size = tokenizer.vocab_size;
  training.rng_seed = seed;
  evaluation.rng_seed = seed;
}

void PipelineConfig::validate() const {
  if (model.vocab_size != tokenizer.vocab_size) {
    throw std::invalid_argument("config error: model.vocab_size must mirror tokenizer.vocab_size");
  }
  if (tokenizer.vocab_size < tok::kNumSpecialTokens + 1) {
    throw std::invalid_argument("config error at tokenizer.vocab_size: too small");
  }
  if (tokenizer.max_chars_per_word < 1) {
    throw std::invalid_argument("config error at tokenizer.max_chars_per_word: must be >= 1");
  }
  if (tokenizer.min_pair_frequency < 1) {
    throw std::invalid_argument("config error at tokenizer.min_pair_frequency: must be >= 1");
  }
  if (!(corpus.validation_fraction >= 0.0 && corpus.validation_fraction < 1.0)) {
    throw std::invalid_argument(
        "config error at corpus.validation_fraction: must lie in [0, 1)");
  }
  {
    std::set<std::string> names;
    for (const auto& ds : paths.eval_datasets) {
      if (!names.insert(ds.name).second) {
        throw std::invalid_argument("config error at paths.eval_datasets: duplicate name '" +
                                    ds.name + "'");
      }
    }
  }
  model.validate();
  training.validate(model);
  evaluation.validate();
}

PipelineConfig parse_pipeline_config(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(origin + " is not valid JSON: " + e.what());
  }
  check_keys(j, origin,
             {"seed", "deterministic", "paths", "corpus", "tokenizer", "model", "training",
              "evaluation"});
  PipelineConfig config;
  read(j, "seed", &config.seed, origin);
  read(j, "deterministic", &config.deterministic, origin);
  if (const json* s = subsection(j, "paths")) parse_paths(*s, &config.paths);
  if (const json* s = subsection(j, "corpus")) parse_corpus(*s, &config.corpus);
  if (const json* s = subsection(j, "tokenizer")) parse_tokenizer(*s, &config.tokenizer);
  if (const json* s = subsection(j, "model")) parse_model(*s, &config.model);
  if (const json* s = subsection(j, "training")) parse_training(*s, &config.training);
  if (const json* s = subsection(j, "evaluation")) parse_evaluation(*s, &config.evaluation);
  // Derived fields may appear in a document (the effective-config echo writes
  // them) but must agree with their source of truth.
  if (const json* s = subsection(j, "model"); s && s->contains("vocab_size") &&
                                              config.model.vocab_size !=
                                                  config.tokenizer.vocab_size) {
    fail("model.vocab_size", "must mirror tokenizer.vocab_size");
  }
  if (const json* s = subsection(j, "training"); s && s->contains("rng_seed") &&
                                                 config.training.rng_seed != config.seed) {
    fail("training.rng_seed", "must mirror seed");
  }
  if (const json* s = subsection(j, "evaluation"); s && s->contains("rng_seed") &&
                                                   config.evaluation.rng_seed != config.seed) {
    fail("evaluation.rng_seed", "must mirror seed");
  }
  config.sync_derived_fields();
  config.validate();
  return config;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_pipeline_config(buffer.str(), path);
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["paths"]["raw_dir"] = c.paths.raw_dir;
  j["paths"]["work_dir"] = c.paths.work_dir;
  j["paths"]["abbreviations"] = c.paths.abbreviations;
  j["paths"]["eval_datasets"] = ordered_json::array();
  for (const auto& ds : c.paths.eval_datasets) {
    j["paths"]["eval_datasets"].push_back({{"name", ds.name}, {"path", ds.path}});
  }
  j["corpus"]["validation_fraction"] = c.corpus.validation_fraction;
  j["tokenizer"]["vocab_size"] = c.tokenizer.vocab_size;
  j["tokenizer"]["lowercase"] = c.tokenizer.lowercase;
  j["tokenizer"]["max_chars_per_word"] = c.tokenizer.max_chars_per_word;
  j["tokenizer"]["min_pair_frequency"] = c.tokenizer.min_pair_frequency;
  j["model"]["num_layers"] = c.model.num_layers;
  j["model"]["hidden_size"] = c.model.hidden_size;
  j["model"]["num_heads"] = c.model.num_heads;
  j["model"]["ffn_size"] = c.model.ffn_size;
  j["model"]["vocab_size"] = c.model.vocab_size;
  j["model"]["max_positions"] = c.model.max_positions;
  j["model"]["segment_types"] = c.model.segment_types;
  j["model"]["dropout_rate"] = c.model.dropout_rate;
  j["model"]["activation"] = c.model.activation;
  j["model"]["initializer_stddev"] = c.model.initializer_stddev;
  auto phase_json = [](const train::PhaseConfig& p) {
    ordered_json pj;
    pj["batch_size"] = p.batch_size;
    pj["sequence_length"] = p.sequence_length;
    pj["epochs"] = p.epochs;
    return pj;
  };
  j["training"]["phase1"] = phase_json(c.training.phase1);
  j["training"]["phase2"] = phase_json(c.training.phase2);
  j["training"]["learning_rate"] = c.training.learning_rate;
  j["training"]["warmup_steps"] = c.training.warmup_steps;
  j["training"]["weight_decay"] = c.training.weight_decay;
  j["training"]["adam_beta1"] = c.training.adam_beta1;
  j["training"]["adam_beta2"] = c.training.adam_beta2;
  j["training"]["adam_epsilon"] = c.training.adam_epsilon;
  j["training"]["gradient_clip_norm"] = c.training.gradient_clip_norm;
  j["training"]["nsp_positive_rate"] = c.training.nsp_positive_rate;
  j["training"]["checkpoint_every_n_steps"] = c.training.checkpoint_every_n_steps;
  j["training"]["rng_seed"] = c.training.rng_seed;
  j["training"]["masking"]["select_rate"] = c.training.masking.select_rate;
  j["training"]["masking"]["mask_fraction"] = c.training.masking.mask_fraction;
  j["training"]["masking"]["random_fraction"] = c.training.masking.random_fraction;
  j["training"]["masking"]["keep_fraction"] = c.training.masking.keep_fraction;
  j["evaluation"]["window_words"] = c.evaluation.window_words;
  j["evaluation"]["stride_words"] = c.evaluation.stride_words;
  j["evaluation"]["top_ks"] = c.evaluation.top_ks;
  j["evaluation"]["num_runs"] = c.evaluation.num_runs;
  j["evaluation"]["rng_seed"] = c.evaluation.rng_seed;
  return j.dump(2) + "\n";
}

}  // namespace uzlm::config
