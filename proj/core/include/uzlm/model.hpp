#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "uzlm/rng.hpp"

namespace uzlm::model {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int num_layers = 12;
  int hidden_size = 768;
  int num_heads = 12;
  int ffn_size = 3072;  // 4x hidden
  int vocab_size = 30000;
  int max_positions = 512;
  int segment_types = 2;
  double dropout_rate = 0.1;
  std::string activation = "gelu";
  double initializer_stddev = 0.02;

  int head_size() const { return hidden_size / num_heads; }
  // Throws std::invalid_argument when inconsistent (hidden not divisible by
  // heads, dropout outside [0,1), non-positive dims, unknown activation).
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr int32_t kIgnoreLabel = -1;

// One packed group of training examples. Row-major [batch, seq] buffers.
struct Batch {
  int batch_size = 0;
  int seq_len = 0;
  std::vector<int32_t> token_ids;
  std::vector<int32_t> segment_ids;
  std::vector<int32_t> attention_mask;  // 1 = real token, 0 = padding
  std::vector<int32_t> mlm_labels;      // original id at corrupted positions, else kIgnoreLabel
  std::vector<int32_t> nsp_labels;      // [batch]; {0,1} or kIgnoreLabel

  size_t flat(int b, int t) const { return static_cast<size_t>(b) * seq_len + t; }
  // Checks the type invariants against a config; throws std::invalid_argument.
  void validate(const ModelConfig& config) const;
};

template <typename T>
struct AttentionParams {
  Mat<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct LayerParams {
  AttentionParams<T> attention;
  Mat<T> attn_ln_gamma, attn_ln_beta;
  Mat<T> ffn_w1, ffn_b1;  // [H,F], [1,F]
  Mat<T> ffn_w2, ffn_b2;  // [F,H], [1,H]
  Mat<T> ffn_ln_gamma, ffn_ln_beta;
};

// Every learnable tensor of the encoder plus the MLM/NSP heads. The MLM
// decoder weight is tied to token_embedding and therefore has no tensor of
// its own.
template <typename T>
struct EncoderState {
  ModelConfig config;

  Mat<T> token_embedding;     // [V, H]
  Mat<T> position_embedding;  // [P, H]
  Mat<T> segment_embedding;   // [S, H]
  Mat<T> emb_ln_gamma, emb_ln_beta;  // [1, H]

  std::vector<LayerParams<T>> layers;

  Mat<T> mlm_dense_w, mlm_dense_b;   // [H, H], [1, H]
  Mat<T> mlm_ln_gamma, mlm_ln_beta;  // [1, H]
  Mat<T> mlm_output_bias;            // [1, V]
  Mat<T> pooler_w, pooler_b;         // [H, H], [1, H]
  Mat<T> nsp_w, nsp_b;               // [H, 2], [1, 2]

  struct TensorRef {
    std::string name;
    Mat<T>* tensor;
    bool weight_decay;  // false for biases and layer-norm parameters
  };
  struct ConstTensorRef {
    std::string name;
    const Mat<T>* tensor;
    bool weight_decay;
  };

  // Canonical enumeration; defines checkpoint manifest order.
  std::vector<TensorRef> named_tensors();
  std::vector<ConstTensorRef> named_tensors() const;

  // All-zero tensors of the right shapes (gradient / moment container).
  static EncoderState zeros(const ModelConfig& config);
};

// Truncated-normal(0, initializer_stddev) weights clipped at +/-2 sigma,
// zero biases, unit layer-norm scales. Bit-deterministic per seed.
template <typename T>
EncoderState<T> init_model(const ModelConfig& config, uint64_t seed);

enum class Mode { kTrain, kEval };

template <typename T>
struct ForwardResult {
  Mat<T> mlm_logits;  // [batch*seq, V]
  Mat<T> nsp_logits;  // [batch, 2]
  // Post-softmax attention, filled when capture_attention is set; indexed
  // [layer][batch * num_heads + head], each [seq, seq].
  std::vector<std::vector<Mat<T>>> attention_probs;
};

// Runs the encoder. In kTrain mode dropout_rng must be non-null; in kEval
// mode dropout is the identity and the result is deterministic. Throws when
// batch invariants fail or seq_len exceeds max_positions.
template <typename T>
ForwardResult<T> forward(const EncoderState<T>& state, const Batch& batch, Mode mode,
                         Rng* dropout_rng = nullptr, bool capture_attention = false);

struct LossBreakdown {
  double total = 0.0;
  double mlm_loss = 0.0;
  double nsp_loss = 0.0;
  int64_t mlm_label_count = 0;
  int64_t nsp_label_count = 0;
  int64_t mlm_correct = 0;
  int64_t nsp_correct = 0;
};

// Mean cross-entropy over non-ignored MLM positions plus mean cross-entropy
// over labeled NSP rows. Throws when there is nothing to supervise.
template <typename T>
LossBreakdown mlm_nsp_loss(const Mat<T>& mlm_logits, const Mat<T>& nsp_logits,
                           const Batch& batch);

template <typename T>
struct LossAndGradients {
  LossBreakdown loss;
  EncoderState<T> gradients;  // same shapes as the state
};

// Forward + loss + analytic backward through every parameter.
template <typename T>
LossAndGradients<T> loss_and_gradients(const EncoderState<T>& state, const Batch& batch,
                                       Mode mode, Rng* dropout_rng = nullptr);

// Exact number of scalars in EncoderState for this config (tied decoder
// counted once).
int64_t count_parameters(const ModelConfig& config);

// The activation used by the feed-forward and MLM transform blocks: the tanh
// form of gelu, 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
double gelu_activation(double x);

// FNV-1a over the exact float bit patterns of every tensor; equal states
// hash equal, any bit flip changes it with overwhelming probability.
uint64_t state_fingerprint(const EncoderState<float>& state);

extern template struct EncoderState<float>;
extern template struct EncoderState<double>;
extern template EncoderState<float> init_model<float>(const ModelConfig&, uint64_t);
extern template EncoderState<double> init_model<double>(const ModelConfig&, uint64_t);
extern template ForwardResult<float> forward<float>(const EncoderState<float>&, const Batch&,
                                                    Mode, Rng*, bool);
extern template ForwardResult<double> forward<double>(const EncoderState<double>&, const Batch&,
                                                      Mode, Rng*, bool);
extern template LossBreakdown mlm_nsp_loss<float>(const Mat<float>&, const Mat<float>&,
                                                  const Batch&);
extern template LossBreakdown mlm_nsp_loss<double>(const Mat<double>&, const Mat<double>&,
                                                   const Batch&);
extern template LossAndGradients<float> loss_and_gradients<float>(const EncoderState<float>&,
                                                                  const Batch&, Mode, Rng*);
extern template LossAndGradients<double> loss_and_gradients<double>(const EncoderState<double>&,
                                                                    const Batch&, Mode, Rng*);

}  // namespace uzlm::model
