#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "uzlm/model.hpp"
#include "uzlm/rng.hpp"

namespace {

using namespace uzlm;

model::ModelConfig desk_config() {
  model::ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 64;
  c.num_heads = 4;
  c.ffn_size = 128;
  c.vocab_size = 400;
  c.max_positions = 512;
  c.dropout_rate = 0.1;
  return c;
}

model::Batch random_batch(const model::ModelConfig& config, int batch_size, int seq_len) {
  Rng rng(1234);
  model::Batch batch;
  batch.batch_size = batch_size;
  batch.seq_len = seq_len;
  const size_t n = static_cast<size_t>(batch_size) * seq_len;
  batch.token_ids.resize(n);
  batch.segment_ids.resize(n);
  batch.attention_mask.assign(n, 1);
  batch.mlm_labels.assign(n, model::kIgnoreLabel);
  for (int b = 0; b < batch_size; ++b) {
    const int boundary = seq_len / 2;
    for (int t = 0; t < seq_len; ++t) {
      const size_t i = batch.flat(b, t);
      batch.token_ids[i] =
          5 + static_cast<int32_t>(rng.uniform_int(config.vocab_size - 5));
      batch.segment_ids[i] = t < boundary ? 0 : 1;
      if (rng.bernoulli(0.15)) {
        batch.mlm_labels[i] = batch.token_ids[i];
        batch.token_ids[i] = 4;  // [MASK]
      }
    }
    batch.token_ids[batch.flat(b, 0)] = 2;             // [CLS]
    batch.mlm_labels[batch.flat(b, 0)] = model::kIgnoreLabel;
    batch.token_ids[batch.flat(b, seq_len - 1)] = 3;   // [SEP]
    batch.mlm_labels[batch.flat(b, seq_len - 1)] = model::kIgnoreLabel;
    batch.nsp_labels.push_back(b % 2);
  }
  return batch;
}

void BM_Forward(benchmark::State& state) {
  const model::ModelConfig config = desk_config();
  const auto model = model::init_model<float>(config, 42);
  const model::Batch batch =
      random_batch(config, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    const auto out = model::forward(model, batch, model::Mode::kEval);
    benchmark::DoNotOptimize(out.mlm_logits.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_Forward)->Args({8, 32})->Args({8, 128})->Args({2, 512});

void BM_LossAndGradients(benchmark::State& state) {
  const model::ModelConfig config = desk_config();
  const auto model = model::init_model<float>(config, 42);
  const model::Batch batch =
      random_batch(config, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    const auto out = model::loss_and_gradients(model, batch, model::Mode::kEval);
    benchmark::DoNotOptimize(out.loss.total);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}
BENCHMARK(BM_LossAndGradients)->Args({8, 32})->Args({8, 128})->Args({2, 512});

}  // namespace

BENCHMARK_MAIN();
