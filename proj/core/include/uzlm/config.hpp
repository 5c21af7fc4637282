#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uzlm/evaluation.hpp"
#include "uzlm/model.hpp"
#include "uzlm/tokenizer.hpp"
#include "uzlm/training.hpp"

namespace uzlm::config {

struct EvalDatasetSpec {
  std::string name;
  std::string path;
};

struct PathsConfig {
  std::string raw_dir;            // directory of raw .txt document collections
  std::string work_dir = "out";   // artifact root, overridable with --out
  std::string abbreviations;      // optional abbreviation list for sentence splitting
  std::vector<EvalDatasetSpec> eval_datasets;
};

struct CorpusSection {
  double validation_fraction = 0.014;
};

// Single configuration for the whole pipeline. The master seed feeds the
// training and evaluation seeds; the model vocab_size mirrors the tokenizer
// one, so neither can drift.
struct PipelineConfig {
  uint64_t seed = 42;
  bool deterministic = true;
  PathsConfig paths;
  CorpusSection corpus;
  tok::TokenizerConfig tokenizer;
  model::ModelConfig model;
  train::TrainConfig training;
  eval::EvalConfig evaluation;

  // Re-applies the mirroring rules (after e.g. a --seed override).
  void sync_derived_fields();
  // Cross-field validation; throws std::invalid_argument with a key path.
  void validate() const;
};

// Strict JSON parsing: unknown keys and wrong types are errors naming the
// offending "section.key" path.
PipelineConfig parse_pipeline_config(const std::string& json_text, const std::string& origin);
PipelineConfig load_pipeline_config(const std::string& path);

// Deterministic echo of the effective configuration.
std::string pipeline_config_to_json(const PipelineConfig& config);

}  // namespace uzlm::config
