#include "uzlm/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uzlm/checkpoint.hpp"
#include "uzlm/config.hpp"
#include "uzlm/corpus.hpp"
#include "uzlm/evaluation.hpp"
#include "uzlm/model.hpp"
#include "uzlm/rng.hpp"
#include "uzlm/tokenizer.hpp"
#include "uzlm/training.hpp"
#include "uzlm/vocab.hpp"

namespace uzlm::cli {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// A mistake in flags, configuration or referenced inputs: exit code 1.
// Anything else thrown during execution is a runtime failure: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kConfigDirEnv = "UZLM_CONFIG_DIR";

// Guards a work directory against concurrent commands. Created O_EXCL so a
// second invocation fails fast instead of interleaving writes.
class LockFile {
 public:
  explicit LockFile(const fs::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) {
        throw std::runtime_error(
            "lock file " + path.string() +
            " exists; another command is using this output directory "
            "(delete the file if it is stale)");
      }
      throw std::runtime_error("cannot create lock file " + path.string() + ": " +
                               std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::write(fd_, pid.data(), pid.size()) < 0) {
      // The lock still holds; the pid is advisory.
    }
  }
  ~LockFile() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// Paths of every artifact a command may produce, all under the work dir.
struct Layout {
  fs::path work;

  fs::path corpus_dir() const { return work / "corpus"; }
  fs::path train_corpus() const { return corpus_dir() / "train.txt"; }
  fs::path val_corpus() const { return corpus_dir() / "validation.txt"; }
  fs::path corpus_stats() const { return corpus_dir() / "stats.json"; }
  fs::path vocab() const { return work / "vocab.txt"; }
  fs::path checkpoints() const { return work / "checkpoints"; }
  fs::path metrics() const { return work / "metrics.jsonl"; }
  fs::path eval_dir() const { return work / "eval"; }
  fs::path report_json() const { return eval_dir() / "report.json"; }
  fs::path report_table() const { return eval_dir() / "report.txt"; }
  fs::path lock() const { return work / ".uzlm.lock"; }
  fs::path echo(const std::string& command) const { return work / (command + "-config.json"); }
};

// --config resolution: an existing path wins; otherwise a relative path is
// retried under $UZLM_CONFIG_DIR; with no --config at all, the directory's
// default.json is used.
std::string resolve_config_path(const std::string& flag) {
  const char* env = std::getenv(kConfigDirEnv);
  if (!flag.empty()) {
    if (fs::exists(flag)) return flag;
    if (env != nullptr && *env != '\0' && !fs::path(flag).is_absolute()) {
      const fs::path alt = fs::path(env) / flag;
      if (fs::exists(alt)) return alt.string();
      throw UsageError("config file not found: " + flag + " (also tried " + alt.string() + ")");
    }
    throw UsageError("config file not found: " + flag);
  }
  if (env != nullptr && *env != '\0') {
    const fs::path alt = fs::path(env) / "default.json";
    if (fs::exists(alt)) return alt.string();
    throw UsageError("no --config given and " + alt.string() + " does not exist");
  }
  throw UsageError(std::string("no --config given and ") + kConfigDirEnv + " is not set");
}

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  std::string out_dir;
  bool dry_run = false;
};

config::PipelineConfig load_effective_config(const CommonFlags& flags) {
  config::PipelineConfig cfg = config::load_pipeline_config(resolve_config_path(flags.config_path));
  if (flags.seed.has_value()) cfg.seed = *flags.seed;
  if (flags.deterministic) cfg.deterministic = true;
  if (!flags.out_dir.empty()) cfg.paths.work_dir = flags.out_dir;
  cfg.sync_derived_fields();
  cfg.validate();
  return cfg;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

void write_config_echo(const Layout& layout, const std::string& command,
                       const config::PipelineConfig& cfg) {
  write_text_file(layout.echo(command), config::pipeline_config_to_json(cfg));
}

// Raw input layout: every *.txt in the directory holds blank-line-separated
// documents; lines inside a document are joined with spaces. The file stem
// becomes the source tag.
std::vector<corpus::Document> read_raw_documents(const std::string& raw_dir) {
  if (raw_dir.empty()) throw UsageError("paths.raw_dir is not set (or pass --raw-dir)");
  if (!fs::is_directory(raw_dir)) throw UsageError("raw corpus directory not found: " + raw_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(raw_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw UsageError("no .txt files in " + raw_dir);
  std::sort(files.begin(), files.end());

  std::vector<corpus::Document> docs;
  for (const fs::path& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw UsageError("cannot read " + file.string());
    const std::string stem = file.stem().string();
    std::string line;
    std::string text;
    int index = 0;
    auto flush = [&] {
      if (text.empty()) return;
      ++index;
      docs.push_back({stem + "-" + std::to_string(index), text, stem});
      text.clear();
    };
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        flush();
      } else {
        if (!text.empty()) text += ' ';
        text += line;
      }
    }
    flush();
  }
  return docs;
}

std::set<std::string> load_abbreviations(const std::string& path) {
  std::set<std::string> abbrevs = corpus::default_abbreviations();
  if (!path.empty()) {
    if (!fs::exists(path)) throw UsageError("abbreviation file not found: " + path);
    const std::set<std::string> extra = corpus::read_abbreviation_file(path);
    abbrevs.insert(extra.begin(), extra.end());
  }
  return abbrevs;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

int cmd_corpus_prepare(const config::PipelineConfig& cfg, const Layout& layout, bool dry_run) {
  const std::vector<corpus::Document> raw = read_raw_documents(cfg.paths.raw_dir);
  const std::set<std::string> abbrevs = load_abbreviations(cfg.paths.abbreviations);
  if (dry_run) {
    std::cout << "dry run: would normalize " << raw.size() << " documents from "
              << cfg.paths.raw_dir << " into " << layout.corpus_dir().string() << "\n";
    return 0;
  }

  std::vector<corpus::Document> docs = raw;
  const int64_t dropped = corpus::normalize_documents(docs);
  if (docs.empty()) throw UsageError("no documents survive normalization in " + cfg.paths.raw_dir);

  corpus::SplitSpec split_spec;
  split_spec.validation_fraction = cfg.corpus.validation_fraction;
  split_spec.rng_seed = cfg.seed;
  const auto [train_docs, val_docs] = corpus::split_corpus(docs, split_spec);

  auto to_sentences = [&abbrevs](const std::vector<corpus::Document>& in) {
    std::vector<corpus::SentenceDocument> out;
    out.reserve(in.size());
    for (const auto& doc : in) out.push_back(corpus::split_sentences(doc, abbrevs));
    return out;
  };

  fs::create_directories(layout.corpus_dir());
  const LockFile lock(layout.lock());
  corpus::write_corpus_file(layout.train_corpus().string(), to_sentences(train_docs));
  corpus::write_corpus_file(layout.val_corpus().string(), to_sentences(val_docs));

  const corpus::CorpusStats stats = corpus::corpus_stats(docs);
  ordered_json j;
  j["documents"] = stats.document_count;
  j["words"] = stats.word_count;
  j["dropped"] = dropped;
  j["words_per_source"] = ordered_json::object();
  for (const auto& [source, words] : stats.words_per_source) {
    j["words_per_source"][source] = words;
  }
  j["train_documents"] = train_docs.size();
  j["validation_documents"] = val_docs.size();
  j["config"] = ordered_json::parse(config::pipeline_config_to_json(cfg));
  write_text_file(layout.corpus_stats(), j.dump(2) + "\n");
  write_config_echo(layout, "corpus-prepare", cfg);

  std::cout << "read " << raw.size() << " raw documents from " << cfg.paths.raw_dir << "\n"
            << "dropped " << dropped << " (invalid utf-8 or empty after normalization)\n"
            << "kept " << stats.document_count << " documents, " << stats.word_count
            << " words\n"
            << "split: " << train_docs.size() << " train / " << val_docs.size()
            << " validation documents\n"
            << "wrote " << layout.train_corpus().string() << "\n"
            << "wrote " << layout.val_corpus().string() << "\n"
            << "wrote " << layout.corpus_stats().string() << "\n";
  return 0;
}

int cmd_tokenizer_train(const config::PipelineConfig& cfg, const Layout& layout,
                        const std::string& corpus_override, bool dry_run) {
  const fs::path corpus_path =
      corpus_override.empty() ? layout.train_corpus() : fs::path(corpus_override);
  if (!fs::exists(corpus_path)) {
    throw UsageError("corpus file not found: " + corpus_path.string() +
                     " (run corpus-prepare first, or pass --corpus)");
  }
  if (dry_run) {
    std::cout << "dry run: would train a " << cfg.tokenizer.vocab_size
              << "-token vocabulary from " << corpus_path.string() << " into "
              << layout.vocab().string() << "\n";
    return 0;
  }

  const std::vector<corpus::SentenceDocument> docs =
      corpus::read_corpus_file(corpus_path.string());
  std::vector<std::string> sentences;
  for (const auto& doc : docs) {
    sentences.insert(sentences.end(), doc.sentences.begin(), doc.sentences.end());
  }
  const tok::WordFrequencies freqs = tok::count_word_frequencies(sentences);
  if (freqs.empty()) throw UsageError("corpus file has no words: " + corpus_path.string());

  const tok::Vocabulary vocab = tok::train_wordpiece(freqs, cfg.tokenizer);

  // Share of emitted subword tokens that are not [UNK], frequency-weighted.
  int64_t total_pieces = 0;
  int64_t unk_pieces = 0;
  for (const auto& [word, count] : freqs) {
    const std::vector<int> pieces = tok::encode_word(word, vocab, cfg.tokenizer);
    total_pieces += count * static_cast<int64_t>(pieces.size());
    for (const int id : pieces) {
      if (id == tok::kUnkId) unk_pieces += count;
    }
  }
  const double coverage = 100.0 * (1.0 - static_cast<double>(unk_pieces) /
                                             static_cast<double>(total_pieces));

  fs::create_directories(layout.work);
  const LockFile lock(layout.lock());
  char coverage_text[64];
  std::snprintf(coverage_text, sizeof(coverage_text), "%.2f", coverage);
  vocab.save(layout.vocab().string(),
             {"uzlm wordpiece vocabulary", "requested vocab_size: " +
                  std::to_string(cfg.tokenizer.vocab_size),
              "actual size: " + std::to_string(vocab.size()),
              "lowercase: " + std::string(cfg.tokenizer.lowercase ? "true" : "false"),
              "training corpus coverage: " + std::string(coverage_text) + "% non-[UNK]"});
  write_config_echo(layout, "tokenizer-train", cfg);

  std::cout << "trained vocabulary: " << vocab.size() << " tokens (requested "
            << cfg.tokenizer.vocab_size << ")\n";
  std::printf("corpus coverage: %.2f%% of tokens are not [UNK]\n", coverage);
  std::cout << "wrote " << layout.vocab().string() << "\n";
  return 0;
}

// The vocabulary artifact may be smaller than the configured ceiling when
// the corpus runs out of frequent pairs; the model is sized to the artifact.
model::ModelConfig model_for_vocab(const config::PipelineConfig& cfg,
                                   const tok::Vocabulary& vocab) {
  if (vocab.size() > cfg.tokenizer.vocab_size) {
    throw UsageError("vocab file has " + std::to_string(vocab.size()) +
                     " tokens but tokenizer.vocab_size is " +
                     std::to_string(cfg.tokenizer.vocab_size) +
                     "; it cannot come from this config");
  }
  model::ModelConfig model = cfg.model;
  model.vocab_size = vocab.size();
  model.validate();
  return model;
}

std::vector<train::TokenizedDocument> load_tokenized(const fs::path& path,
                                                     const tok::Vocabulary& vocab,
                                                     const tok::TokenizerConfig& tok_cfg) {
  if (!fs::exists(path)) return {};
  return train::tokenize_documents(corpus::read_corpus_file(path.string()), vocab, tok_cfg);
}

int cmd_pretrain(const config::PipelineConfig& cfg, const Layout& layout, bool resume,
                 int64_t max_steps, bool dry_run) {
  if (dry_run) {
    const auto& p1 = cfg.training.phase1;
    const auto& p2 = cfg.training.phase2;
    std::cout << "dry run: schedule for this config\n"
              << "phase 1: " << p1.epochs << " epochs @ batch " << p1.batch_size << " x seq "
              << p1.sequence_length << "\n"
              << "phase 2: " << p2.epochs << " epochs @ batch " << p2.batch_size << " x seq "
              << p2.sequence_length << "\n"
              << "model parameters: " << model::count_parameters(cfg.model) << "\n";
    if (fs::exists(layout.vocab()) && fs::exists(layout.train_corpus())) {
      const tok::Vocabulary vocab = tok::Vocabulary::load(layout.vocab().string());
      const model::ModelConfig model = model_for_vocab(cfg, vocab);
      const auto docs = load_tokenized(layout.train_corpus(), vocab, cfg.tokenizer);
      const train::TrainingSchedule schedule = train::compute_schedule(docs, cfg.training);
      std::cout << "steps per epoch: phase 1 = " << schedule.phase1_steps_per_epoch
                << ", phase 2 = " << schedule.phase2_steps_per_epoch << "\n"
                << "total optimizer steps: " << schedule.total_steps << "\n"
                << "model parameters at vocab " << vocab.size() << ": "
                << model::count_parameters(model) << "\n";
    }
    return 0;
  }

  if (!fs::exists(layout.vocab())) {
    throw UsageError("vocabulary not found: " + layout.vocab().string() +
                     " (run tokenizer-train first)");
  }
  if (!fs::exists(layout.train_corpus())) {
    throw UsageError("training corpus not found: " + layout.train_corpus().string() +
                     " (run corpus-prepare first)");
  }
  const tok::Vocabulary vocab = tok::Vocabulary::load(layout.vocab().string());
  const model::ModelConfig model = model_for_vocab(cfg, vocab);
  const auto train_docs = load_tokenized(layout.train_corpus(), vocab, cfg.tokenizer);
  const auto val_docs = load_tokenized(layout.val_corpus(), vocab, cfg.tokenizer);
  if (resume && model::find_latest_checkpoint(layout.checkpoints().string()).empty()) {
    throw UsageError("--resume given but no checkpoint under " + layout.checkpoints().string());
  }

  config::PipelineConfig echo_cfg = cfg;
  echo_cfg.model = model;
  // Keep the mirror invariant intact so the echo reloads as-is.
  echo_cfg.tokenizer.vocab_size = model.vocab_size;
  fs::create_directories(layout.work);
  const LockFile lock(layout.lock());
  write_config_echo(layout, "pretrain", echo_cfg);

  train::PretrainOptions options;
  options.checkpoint_dir = layout.checkpoints().string();
  options.metrics_path = layout.metrics().string();
  options.resume = resume;
  options.max_steps = max_steps;
  options.epoch_callback = [](const train::EpochSummary& s) {
    std::printf(
        "phase %d epoch %d (step %lld): train mlm %.4f acc %.1f%% nsp %.4f acc %.1f%%",
        s.phase, s.epoch, static_cast<long long>(s.global_step), s.train_mlm_loss,
        100.0 * s.train_mlm_accuracy, s.train_nsp_loss, 100.0 * s.train_nsp_accuracy);
    if (s.val_mlm_loss == s.val_mlm_loss) {  // not NaN
      std::printf(" | val mlm %.4f acc %.1f%% nsp %.4f acc %.1f%%", s.val_mlm_loss,
                  100.0 * s.val_mlm_accuracy, s.val_nsp_loss, 100.0 * s.val_nsp_accuracy);
    }
    std::printf("\n");
    std::fflush(stdout);
    return true;
  };

  const train::PretrainResult result =
      train::pretrain(train_docs, val_docs, vocab, model, cfg.training, options);

  std::cout << (result.stopped_early ? "stopped early: " : "finished: ") << result.total_steps
            << " steps";
  if (result.rejected_steps > 0) std::cout << " (" << result.rejected_steps << " rejected)";
  std::cout << "\nfinal checkpoint: " << result.final_checkpoint_dir << "\n"
            << "metrics log: " << layout.metrics().string() << "\n";
  return 0;
}

int cmd_evaluate(const config::PipelineConfig& cfg, const Layout& layout,
                 const std::string& predictor_kind, const std::string& checkpoint_override,
                 bool dry_run) {
  if (cfg.paths.eval_datasets.empty()) {
    throw UsageError("paths.eval_datasets is empty; nothing to evaluate");
  }
  for (const auto& spec : cfg.paths.eval_datasets) {
    if (!fs::exists(spec.path)) {
      throw UsageError("evaluation dataset not found: " + spec.path + " (" + spec.name + ")");
    }
  }

  std::unique_ptr<eval::Predictor> predictor;
  if (predictor_kind == "oracle") {
    predictor = std::make_unique<eval::OraclePredictor>();
  } else if (predictor_kind == "adversarial") {
    predictor = std::make_unique<eval::AdversarialPredictor>();
  } else if (predictor_kind == "uniform") {
    if (!fs::exists(layout.vocab())) {
      throw UsageError("vocabulary not found: " + layout.vocab().string() +
                       " (the uniform predictor draws from it)");
    }
    const tok::Vocabulary vocab = tok::Vocabulary::load(layout.vocab().string());
    std::vector<std::string> words;
    for (int id = tok::kNumSpecialTokens; id < vocab.size(); ++id) {
      if (!tok::Vocabulary::is_continuation(vocab.token(id))) words.push_back(vocab.token(id));
    }
    if (words.empty()) throw UsageError("vocabulary has no word-initial tokens");
    predictor = std::make_unique<eval::UniformPredictor>(words, cfg.evaluation.rng_seed);
  } else if (predictor_kind == "checkpoint") {
    const std::string ckpt = checkpoint_override.empty()
                                 ? model::find_latest_checkpoint(layout.checkpoints().string())
                                 : checkpoint_override;
    if (ckpt.empty()) {
      throw UsageError("no checkpoint under " + layout.checkpoints().string() +
                       " (run pretrain first, or pass --checkpoint)");
    }
    if (!fs::exists(fs::path(ckpt) / "manifest.json")) {
      throw UsageError("checkpoint not found: " + ckpt);
    }
    if (!fs::exists(layout.vocab())) {
      throw UsageError("vocabulary not found: " + layout.vocab().string());
    }
    if (dry_run) {
      std::cout << "dry run: would evaluate " << ckpt << " on "
                << cfg.paths.eval_datasets.size() << " datasets\n";
      return 0;
    }
    tok::Vocabulary vocab = tok::Vocabulary::load(layout.vocab().string());
    model::LoadedCheckpoint loaded = model::load_checkpoint(ckpt);
    predictor = std::make_unique<eval::CheckpointPredictor>(
        std::move(loaded.state), std::move(vocab), cfg.tokenizer);
  } else {
    throw UsageError("unknown predictor: " + predictor_kind);
  }
  if (dry_run) {
    std::cout << "dry run: would evaluate predictor '" << predictor_kind << "' on "
              << cfg.paths.eval_datasets.size() << " datasets\n";
    return 0;
  }

  std::vector<eval::EvalDataset> datasets;
  for (const auto& spec : cfg.paths.eval_datasets) {
    datasets.push_back({spec.name, corpus::normalize_text(read_text_file(spec.path))});
  }

  const eval::EvalReport report =
      eval::run_evaluation(datasets, {predictor.get()}, cfg.evaluation);

  fs::create_directories(layout.eval_dir());
  const LockFile lock(layout.lock());
  write_text_file(layout.report_json(), eval::report_to_json(report));
  const std::string table = eval::report_to_table(report);
  write_text_file(layout.report_table(), table);
  write_config_echo(layout, "evaluate", cfg);

  std::cout << table << "wrote " << layout.report_json().string() << "\n"
            << "wrote " << layout.report_table().string() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"masked-language-model pretraining pipeline for Uzbek"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonFlags flags;
  uint64_t seed_value = 0;
  app.add_option("--config", flags.config_path,
                 "pipeline config JSON (relative paths also resolve under $" +
                     std::string(kConfigDirEnv) + ")");
  auto* seed_opt = app.add_option("--seed", seed_value, "override the master rng seed");
  app.add_flag("--deterministic", flags.deterministic,
               "record that outputs must be reproducible (always on)");
  app.add_option("--out", flags.out_dir, "override paths.work_dir");
  app.add_flag("--dry-run", flags.dry_run, "validate and describe the work, write nothing");

  CLI::App* prepare = app.add_subcommand("corpus-prepare",
                                         "normalize raw text and write the split corpus");
  std::string raw_dir_flag;
  std::string abbrev_flag;
  prepare->add_option("--raw-dir", raw_dir_flag, "override paths.raw_dir");
  prepare->add_option("--abbrev", abbrev_flag, "override paths.abbreviations");

  CLI::App* tokenizer = app.add_subcommand("tokenizer-train",
                                           "train the subword vocabulary from the corpus");
  std::string corpus_flag;
  tokenizer->add_option("--corpus", corpus_flag, "corpus file (default: <out>/corpus/train.txt)");

  CLI::App* pretrain = app.add_subcommand("pretrain", "run the two-phase pretraining loop");
  bool resume = false;
  int64_t max_steps = 0;
  pretrain->add_flag("--resume", resume, "continue from the latest checkpoint");
  pretrain->add_option("--max-steps", max_steps, "interrupt after this many steps (0 = run all)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score a predictor on the eval datasets");
  std::string predictor_kind = "checkpoint";
  std::string checkpoint_flag;
  evaluate->add_option("--predictor", predictor_kind, "predictor to score")
      ->check(CLI::IsMember({"checkpoint", "oracle", "adversarial", "uniform"}));
  evaluate->add_option("--checkpoint", checkpoint_flag,
                       "checkpoint directory (default: latest under <out>/checkpoints)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (seed_opt->count() > 0) flags.seed = seed_value;
    config::PipelineConfig cfg;
    try {
      cfg = load_effective_config(flags);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (prepare->parsed() && !raw_dir_flag.empty()) cfg.paths.raw_dir = raw_dir_flag;
    if (prepare->parsed() && !abbrev_flag.empty()) cfg.paths.abbreviations = abbrev_flag;
    const Layout layout{fs::path(cfg.paths.work_dir)};

    if (prepare->parsed()) return cmd_corpus_prepare(cfg, layout, flags.dry_run);
    if (tokenizer->parsed()) return cmd_tokenizer_train(cfg, layout, corpus_flag, flags.dry_run);
    if (pretrain->parsed()) return cmd_pretrain(cfg, layout, resume, max_steps, flags.dry_run);
    if (evaluate->parsed()) {
      return cmd_evaluate(cfg, layout, predictor_kind, checkpoint_flag, flags.dry_run);
    }
    throw UsageError("a subcommand is required");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace uzlm::cli
