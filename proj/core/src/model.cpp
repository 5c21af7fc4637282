#include "uzlm/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>

namespace uzlm::model {
namespace {

constexpr double kLnEpsilon = 1e-12;
constexpr double kMaskBias = -1e9;

std::string layer_prefix(int layer) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer_%02d", layer);
  return buf;
}

template <typename T>
T gelu(T x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T a = static_cast<T>(0.044715);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T c = static_cast<T>(0.7978845608028654);
  const T a = static_cast<T>(0.044715);
  const T u = c * (x + a * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (static_cast<T>(1) + static_cast<T>(3) * a * x * x);
  return static_cast<T>(0.5) * (static_cast<T>(1) + t) +
         static_cast<T>(0.5) * x * (static_cast<T>(1) - t * t) * du;
}

// y = gamma .* xhat + beta per row; xhat and 1/sqrt(var+eps) are cached for
// the backward pass.
template <typename T>
void layer_norm_forward(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>* y,
                        Mat<T>* xhat, Mat<T>* inv_std) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  y->resize(rows, cols);
  xhat->resize(rows, cols);
  inv_std->resize(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().sum() / static_cast<T>(cols);
    const T istd = static_cast<T>(1) / std::sqrt(var + static_cast<T>(kLnEpsilon));
    xhat->row(i) = (x.row(i).array() - mean) * istd;
    y->row(i) = xhat->row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
    (*inv_std)(i, 0) = istd;
  }
}

template <typename T>
void layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const Mat<T>& inv_std,
                         const Mat<T>& gamma, Mat<T>* dx, Mat<T>* dgamma, Mat<T>* dbeta) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index cols = dy.cols();
  dx->resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::Array<T, 1, Eigen::Dynamic> dxhat = dy.row(i).array() * gamma.row(0).array();
    const T m1 = dxhat.mean();
    const T m2 = (dxhat * xhat.row(i).array()).mean();
    dx->row(i) = ((dxhat - m1 - xhat.row(i).array() * m2) * inv_std(i, 0)).matrix();
  }
  dgamma->row(0) += dy.cwiseProduct(xhat).colwise().sum();
  dbeta->row(0) += dy.colwise().sum();
}

// Inverted-dropout scale mask: entries are 0 with probability rate, else
// 1/(1-rate). Row-major draw order keeps runs bit-reproducible.
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Mat<T> mask(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      mask(i, j) = rng.uniform() < rate ? static_cast<T>(0) : keep_scale;
    }
  }
  return mask;
}

template <typename T>
struct LayerCache {
  Mat<T> xin;                          // [N,H]
  Mat<T> q, k, v;                      // [N,H]
  std::vector<Mat<T>> probs;           // B*A entries of [S,S], post-softmax
  std::vector<Mat<T>> probs_dropped;   // after attention dropout
  std::vector<Mat<T>> prob_masks;      // dropout scale masks
  Mat<T> ctx;                          // [N,H]
  Mat<T> attn_out_mask;                // [N,H] dropout mask (train only)
  Mat<T> attn_xhat, attn_inv_std;
  Mat<T> y;                            // post attention layer norm [N,H]
  Mat<T> z1;                           // FFN pre-activation [N,F]
  Mat<T> h1;                           // FFN post-gelu [N,F]
  Mat<T> ffn_out_mask;                 // [N,H]
  Mat<T> ffn_xhat, ffn_inv_std;
};

template <typename T>
struct ForwardCache {
  Mat<T> emb_xhat, emb_inv_std;
  Mat<T> emb_drop_mask;
  std::vector<LayerCache<T>> layers;
  Mat<T> xf;  // final encoder output [N,H]
  Mat<T> zm;  // MLM dense pre-activation [N,H]
  Mat<T> m1;  // post-gelu [N,H]
  Mat<T> m2;  // post layer norm [N,H]
  Mat<T> m_xhat, m_inv_std;
  Mat<T> pooler_pre;  // [B,H] pre-tanh
  Mat<T> pooled;      // [B,H]
};

template <typename T>
ForwardResult<T> run_forward(const EncoderState<T>& state, const Batch& batch, Mode mode,
                             Rng* rng, bool capture_attention, ForwardCache<T>* cache) {
  batch.validate(state.config);
  if (mode == Mode::kTrain && state.config.dropout_rate > 0 && rng == nullptr) {
    throw std::invalid_argument("train-mode forward needs a dropout rng");
  }
  const ModelConfig& cfg = state.config;
  const int B = batch.batch_size;
  const int S = batch.seq_len;
  const int H = cfg.hidden_size;
  const int A = cfg.num_heads;
  const int D = cfg.head_size();
  const int F = cfg.ffn_size;
  const Eigen::Index N = static_cast<Eigen::Index>(B) * S;
  const bool drop = mode == Mode::kTrain && cfg.dropout_rate > 0;
  const T inv_sqrt_d = static_cast<T>(1) / std::sqrt(static_cast<T>(D));

  // Embedding sum + layer norm + dropout.
  Mat<T> x0(N, H);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < S; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * S + t;
      x0.row(r) = state.token_embedding.row(batch.token_ids[batch.flat(b, t)]) +
                  state.position_embedding.row(t) +
                  state.segment_embedding.row(batch.segment_ids[batch.flat(b, t)]);
    }
  }
  Mat<T> x1, emb_xhat, emb_inv_std;
  layer_norm_forward(x0, state.emb_ln_gamma, state.emb_ln_beta, &x1, &emb_xhat, &emb_inv_std);
  Mat<T> emb_mask;
  if (drop) {
    emb_mask = dropout_mask<T>(N, H, cfg.dropout_rate, *rng);
    x1 = x1.cwiseProduct(emb_mask);
  }
  if (cache != nullptr) {
    cache->emb_xhat = std::move(emb_xhat);
    cache->emb_inv_std = std::move(emb_inv_std);
    cache->emb_drop_mask = std::move(emb_mask);
    cache->layers.resize(cfg.num_layers);
  }

  // Additive key-side attention bias per batch row.
  Mat<T> key_bias(B, S);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < S; ++t) {
      key_bias(b, t) =
          batch.attention_mask[batch.flat(b, t)] != 0 ? static_cast<T>(0)
                                                      : static_cast<T>(kMaskBias);
    }
  }

  ForwardResult<T> result;
  if (capture_attention) result.attention_probs.resize(cfg.num_layers);

  Mat<T> x = std::move(x1);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerParams<T>& p = state.layers[l];
    LayerCache<T>* lc = cache != nullptr ? &cache->layers[l] : nullptr;
    if (lc != nullptr) lc->xin = x;

    Mat<T> q(N, H), k(N, H), v(N, H);
    q.noalias() = x * p.attention.wq;
    q.rowwise() += p.attention.bq.row(0);
    k.noalias() = x * p.attention.wk;
    k.rowwise() += p.attention.bk.row(0);
    v.noalias() = x * p.attention.wv;
    v.rowwise() += p.attention.bv.row(0);

    Mat<T> ctx(N, H);
    if (capture_attention) result.attention_probs[l].reserve(static_cast<size_t>(B) * A);
    if (lc != nullptr) {
      lc->probs.resize(static_cast<size_t>(B) * A);
      lc->probs_dropped.resize(static_cast<size_t>(B) * A);
      if (drop) lc->prob_masks.resize(static_cast<size_t>(B) * A);
    }
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < A; ++h) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * S;
        auto qb = q.block(r0, static_cast<Eigen::Index>(h) * D, S, D);
        auto kb = k.block(r0, static_cast<Eigen::Index>(h) * D, S, D);
        auto vb = v.block(r0, static_cast<Eigen::Index>(h) * D, S, D);
        Mat<T> scores(S, S);
        scores.noalias() = qb * kb.transpose();
        scores *= inv_sqrt_d;
        scores.rowwise() += key_bias.row(b);
        Mat<T> probs(S, S);
        for (int i = 0; i < S; ++i) {
          const T row_max = scores.row(i).maxCoeff();
          Eigen::Array<T, 1, Eigen::Dynamic> e = (scores.row(i).array() - row_max).exp();
          probs.row(i) = (e / e.sum()).matrix();
        }
        if (capture_attention) result.attention_probs[l].push_back(probs);
        Mat<T> dropped;
        if (drop) {
          Mat<T> pmask = dropout_mask<T>(S, S, cfg.dropout_rate, *rng);
          dropped = probs.cwiseProduct(pmask);
          if (lc != nullptr) lc->prob_masks[static_cast<size_t>(b) * A + h] = std::move(pmask);
        } else {
          dropped = probs;
        }
        ctx.block(r0, static_cast<Eigen::Index>(h) * D, S, D).noalias() = dropped * vb;
        if (lc != nullptr) {
          lc->probs[static_cast<size_t>(b) * A + h] = std::move(probs);
          lc->probs_dropped[static_cast<size_t>(b) * A + h] = std::move(dropped);
        }
      }
    }

    Mat<T> attn_out(N, H);
    attn_out.noalias() = ctx * p.attention.wo;
    attn_out.rowwise() += p.attention.bo.row(0);
    if (drop) {
      Mat<T> amask = dropout_mask<T>(N, H, cfg.dropout_rate, *rng);
      attn_out = attn_out.cwiseProduct(amask);
      if (lc != nullptr) lc->attn_out_mask = std::move(amask);
    }
    Mat<T> r1 = x + attn_out;
    Mat<T> y, attn_xhat, attn_inv_std;
    layer_norm_forward(r1, p.attn_ln_gamma, p.attn_ln_beta, &y, &attn_xhat, &attn_inv_std);

    Mat<T> z1(N, F);
    z1.noalias() = y * p.ffn_w1;
    z1.rowwise() += p.ffn_b1.row(0);
    Mat<T> h1 = z1.unaryExpr([](T t) { return gelu(t); });
    Mat<T> ffn_out(N, H);
    ffn_out.noalias() = h1 * p.ffn_w2;
    ffn_out.rowwise() += p.ffn_b2.row(0);
    if (drop) {
      Mat<T> fmask = dropout_mask<T>(N, H, cfg.dropout_rate, *rng);
      ffn_out = ffn_out.cwiseProduct(fmask);
      if (lc != nullptr) lc->ffn_out_mask = std::move(fmask);
    }
    Mat<T> r2 = y + ffn_out;
    Mat<T> xout, ffn_xhat, ffn_inv_std;
    layer_norm_forward(r2, p.ffn_ln_gamma, p.ffn_ln_beta, &xout, &ffn_xhat, &ffn_inv_std);

    if (lc != nullptr) {
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(v);
      lc->ctx = std::move(ctx);
      lc->attn_xhat = std::move(attn_xhat);
      lc->attn_inv_std = std::move(attn_inv_std);
      lc->y = y;
      lc->z1 = std::move(z1);
      lc->h1 = std::move(h1);
      lc->ffn_xhat = std::move(ffn_xhat);
      lc->ffn_inv_std = std::move(ffn_inv_std);
    }
    x = std::move(xout);
  }

  // MLM head: dense + gelu + layer norm, decoder tied to token embeddings.
  Mat<T> zm(N, H);
  zm.noalias() = x * state.mlm_dense_w;
  zm.rowwise() += state.mlm_dense_b.row(0);
  Mat<T> m1 = zm.unaryExpr([](T t) { return gelu(t); });
  Mat<T> m2, m_xhat, m_inv_std;
  layer_norm_forward(m1, state.mlm_ln_gamma, state.mlm_ln_beta, &m2, &m_xhat, &m_inv_std);
  result.mlm_logits.resize(N, cfg.vocab_size);
  result.mlm_logits.noalias() = m2 * state.token_embedding.transpose();
  result.mlm_logits.rowwise() += state.mlm_output_bias.row(0);

  // NSP head: tanh pooler over position 0.
  Mat<T> pooler_pre(B, H);
  for (int b = 0; b < B; ++b) {
    pooler_pre.row(b).noalias() = x.row(static_cast<Eigen::Index>(b) * S) * state.pooler_w;
  }
  pooler_pre.rowwise() += state.pooler_b.row(0);
  Mat<T> pooled = pooler_pre.unaryExpr([](T t) { return std::tanh(t); });
  result.nsp_logits.resize(B, 2);
  result.nsp_logits.noalias() = pooled * state.nsp_w;
  result.nsp_logits.rowwise() += state.nsp_b.row(0);

  if (cache != nullptr) {
    cache->xf = std::move(x);
    cache->zm = std::move(zm);
    cache->m1 = std::move(m1);
    cache->m2 = std::move(m2);
    cache->m_xhat = std::move(m_xhat);
    cache->m_inv_std = std::move(m_inv_std);
    cache->pooler_pre = std::move(pooler_pre);
    cache->pooled = std::move(pooled);
  }
  return result;
}

// Softmax cross-entropy over the rows selected by labels; writes the mean
// upstream gradient into dlogits when non-null.
template <typename T>
void softmax_xent(const Mat<T>& logits, const int32_t* labels, Eigen::Index rows,
                  int64_t* label_count, double* loss_sum, int64_t* correct, Mat<T>* dlogits) {
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    ++*label_count;
  }
  if (dlogits != nullptr) dlogits->setZero(logits.rows(), logits.cols());
  if (*label_count == 0) return;
  const T inv_count = static_cast<T>(1.0 / static_cast<double>(*label_count));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int32_t label = labels[i];
    if (label == kIgnoreLabel) continue;
    const T row_max = logits.row(i).maxCoeff();
    Eigen::Array<T, 1, Eigen::Dynamic> shifted = logits.row(i).array() - row_max;
    Eigen::Array<T, 1, Eigen::Dynamic> e = shifted.exp();
    const T z = e.sum();
    *loss_sum += -static_cast<double>(shifted(label)) + std::log(static_cast<double>(z));
    Eigen::Index argmax = 0;
    logits.row(i).maxCoeff(&argmax);
    if (argmax == label) ++*correct;
    if (dlogits != nullptr) {
      dlogits->row(i) = ((e / z) * inv_count).matrix();
      (*dlogits)(i, label) -= inv_count;
    }
  }
}

template <typename T>
LossBreakdown compute_loss(const Mat<T>& mlm_logits, const Mat<T>& nsp_logits,
                           const Batch& batch, Mat<T>* dmlm, Mat<T>* dnsp) {
  LossBreakdown out;
  double mlm_sum = 0.0;
  double nsp_sum = 0.0;
  softmax_xent(mlm_logits, batch.mlm_labels.data(), mlm_logits.rows(), &out.mlm_label_count,
               &mlm_sum, &out.mlm_correct, dmlm);
  softmax_xent(nsp_logits, batch.nsp_labels.data(), nsp_logits.rows(), &out.nsp_label_count,
               &nsp_sum, &out.nsp_correct, dnsp);
  if (out.mlm_label_count == 0 && out.nsp_label_count == 0) {
    throw std::invalid_argument("batch carries no MLM or NSP labels");
  }
  out.mlm_loss = out.mlm_label_count > 0 ? mlm_sum / out.mlm_label_count : 0.0;
  out.nsp_loss = out.nsp_label_count > 0 ? nsp_sum / out.nsp_label_count : 0.0;
  out.total = out.mlm_loss + out.nsp_loss;
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (num_layers < 0) throw std::invalid_argument("num_layers must be non-negative");
  if (hidden_size <= 0) throw std::invalid_argument("hidden_size must be positive");
  if (num_heads <= 0) throw std::invalid_argument("num_heads must be positive");
  if (hidden_size % num_heads != 0) {
    throw std::invalid_argument("hidden_size must be divisible by num_heads");
  }
  if (ffn_size <= 0) throw std::invalid_argument("ffn_size must be positive");
  if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
  if (max_positions <= 0) throw std::invalid_argument("max_positions must be positive");
  if (segment_types <= 0) throw std::invalid_argument("segment_types must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  }
  if (activation != "gelu") {
    throw std::invalid_argument("unknown activation: " + activation);
  }
  if (initializer_stddev <= 0.0) {
    throw std::invalid_argument("initializer_stddev must be positive");
  }
}

void Batch::validate(const ModelConfig& config) const {
  if (batch_size <= 0 || seq_len <= 0) {
    throw std::invalid_argument("batch must have positive batch_size and seq_len");
  }
  if (seq_len > config.max_positions) {
    throw std::invalid_argument("seq_len exceeds max_positions");
  }
  const size_t n = static_cast<size_t>(batch_size) * seq_len;
  if (token_ids.size() != n || segment_ids.size() != n || attention_mask.size() != n ||
      mlm_labels.size() != n || nsp_labels.size() != static_cast<size_t>(batch_size)) {
    throw std::invalid_argument("batch buffer sizes do not match batch_size*seq_len");
  }
  for (size_t i = 0; i < n; ++i) {
    if (token_ids[i] < 0 || token_ids[i] >= config.vocab_size) {
      throw std::invalid_argument("token id out of vocabulary range");
    }
    if (segment_ids[i] < 0 || segment_ids[i] >= config.segment_types) {
      throw std::invalid_argument("segment id out of range");
    }
    if (attention_mask[i] != 0 && attention_mask[i] != 1) {
      throw std::invalid_argument("attention mask entries must be 0 or 1");
    }
    if (mlm_labels[i] != kIgnoreLabel &&
        (mlm_labels[i] < 0 || mlm_labels[i] >= config.vocab_size)) {
      throw std::invalid_argument("mlm label out of vocabulary range");
    }
  }
  for (int b = 0; b < batch_size; ++b) {
    if (nsp_labels[b] != kIgnoreLabel && nsp_labels[b] != 0 && nsp_labels[b] != 1) {
      throw std::invalid_argument("nsp label must be 0, 1 or ignore");
    }
    bool any_real = false;
    for (int t = 0; t < seq_len; ++t) {
      if (attention_mask[flat(b, t)] != 0) {
        any_real = true;
        break;
      }
    }
    if (!any_real) throw std::invalid_argument("batch row has no real tokens");
  }
}

namespace {

// Single visitation order for both const and mutable enumeration; this order
// is the checkpoint layout contract.
template <typename State, typename Fn>
void visit_tensors(State& s, Fn&& fn) {
  fn("embeddings/token", s.token_embedding, true);
  fn("embeddings/position", s.position_embedding, true);
  fn("embeddings/segment", s.segment_embedding, true);
  fn("embeddings/ln_gamma", s.emb_ln_gamma, false);
  fn("embeddings/ln_beta", s.emb_ln_beta, false);
  for (size_t l = 0; l < s.layers.size(); ++l) {
    auto& p = s.layers[l];
    const std::string prefix = layer_prefix(static_cast<int>(l));
    fn(prefix + "/attn/wq", p.attention.wq, true);
    fn(prefix + "/attn/bq", p.attention.bq, false);
    fn(prefix + "/attn/wk", p.attention.wk, true);
    fn(prefix + "/attn/bk", p.attention.bk, false);
    fn(prefix + "/attn/wv", p.attention.wv, true);
    fn(prefix + "/attn/bv", p.attention.bv, false);
    fn(prefix + "/attn/wo", p.attention.wo, true);
    fn(prefix + "/attn/bo", p.attention.bo, false);
    fn(prefix + "/attn/ln_gamma", p.attn_ln_gamma, false);
    fn(prefix + "/attn/ln_beta", p.attn_ln_beta, false);
    fn(prefix + "/ffn/w1", p.ffn_w1, true);
    fn(prefix + "/ffn/b1", p.ffn_b1, false);
    fn(prefix + "/ffn/w2", p.ffn_w2, true);
    fn(prefix + "/ffn/b2", p.ffn_b2, false);
    fn(prefix + "/ffn/ln_gamma", p.ffn_ln_gamma, false);
    fn(prefix + "/ffn/ln_beta", p.ffn_ln_beta, false);
  }
  fn("mlm/dense_w", s.mlm_dense_w, true);
  fn("mlm/dense_b", s.mlm_dense_b, false);
  fn("mlm/ln_gamma", s.mlm_ln_gamma, false);
  fn("mlm/ln_beta", s.mlm_ln_beta, false);
  fn("mlm/output_bias", s.mlm_output_bias, false);
  fn("pooler/w", s.pooler_w, true);
  fn("pooler/b", s.pooler_b, false);
  fn("nsp/w", s.nsp_w, true);
  fn("nsp/b", s.nsp_b, false);
}

}  // namespace

template <typename T>
std::vector<typename EncoderState<T>::TensorRef> EncoderState<T>::named_tensors() {
  std::vector<TensorRef> refs;
  visit_tensors(*this, [&refs](const std::string& name, Mat<T>& m, bool decay) {
    refs.push_back({name, &m, decay});
  });
  return refs;
}

template <typename T>
std::vector<typename EncoderState<T>::ConstTensorRef> EncoderState<T>::named_tensors() const {
  std::vector<ConstTensorRef> refs;
  visit_tensors(*this, [&refs](const std::string& name, const Mat<T>& m, bool decay) {
    refs.push_back({name, &m, decay});
  });
  return refs;
}

template <typename T>
EncoderState<T> EncoderState<T>::zeros(const ModelConfig& config) {
  config.validate();
  EncoderState<T> s;
  s.config = config;
  const int H = config.hidden_size;
  const int F = config.ffn_size;
  s.token_embedding = Mat<T>::Zero(config.vocab_size, H);
  s.position_embedding = Mat<T>::Zero(config.max_positions, H);
  s.segment_embedding = Mat<T>::Zero(config.segment_types, H);
  s.emb_ln_gamma = Mat<T>::Zero(1, H);
  s.emb_ln_beta = Mat<T>::Zero(1, H);
  s.layers.resize(config.num_layers);
  for (auto& p : s.layers) {
    p.attention.wq = Mat<T>::Zero(H, H);
    p.attention.bq = Mat<T>::Zero(1, H);
    p.attention.wk = Mat<T>::Zero(H, H);
    p.attention.bk = Mat<T>::Zero(1, H);
    p.attention.wv = Mat<T>::Zero(H, H);
    p.attention.bv = Mat<T>::Zero(1, H);
    p.attention.wo = Mat<T>::Zero(H, H);
    p.attention.bo = Mat<T>::Zero(1, H);
    p.attn_ln_gamma = Mat<T>::Zero(1, H);
    p.attn_ln_beta = Mat<T>::Zero(1, H);
    p.ffn_w1 = Mat<T>::Zero(H, F);
    p.ffn_b1 = Mat<T>::Zero(1, F);
    p.ffn_w2 = Mat<T>::Zero(F, H);
    p.ffn_b2 = Mat<T>::Zero(1, H);
    p.ffn_ln_gamma = Mat<T>::Zero(1, H);
    p.ffn_ln_beta = Mat<T>::Zero(1, H);
  }
  s.mlm_dense_w = Mat<T>::Zero(H, H);
  s.mlm_dense_b = Mat<T>::Zero(1, H);
  s.mlm_ln_gamma = Mat<T>::Zero(1, H);
  s.mlm_ln_beta = Mat<T>::Zero(1, H);
  s.mlm_output_bias = Mat<T>::Zero(1, config.vocab_size);
  s.pooler_w = Mat<T>::Zero(H, H);
  s.pooler_b = Mat<T>::Zero(1, H);
  s.nsp_w = Mat<T>::Zero(H, 2);
  s.nsp_b = Mat<T>::Zero(1, 2);
  return s;
}

template <typename T>
EncoderState<T> init_model(const ModelConfig& config, uint64_t seed) {
  EncoderState<T> s = EncoderState<T>::zeros(config);
  Rng rng(derive_seed(seed, {0x1217u}));
  for (auto ref : s.named_tensors()) {
    Mat<T>& m = *ref.tensor;
    const bool is_ln_gamma = ref.name.size() >= 8 &&
                             ref.name.compare(ref.name.size() - 8, 8, "ln_gamma") == 0;
    const bool is_bias = !ref.weight_decay;
    if (is_ln_gamma) {
      m.setConstant(static_cast<T>(1));
    } else if (is_bias) {
      m.setZero();
    } else {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          m(i, j) = static_cast<T>(rng.truncated_normal(config.initializer_stddev));
        }
      }
    }
  }
  return s;
}

template <typename T>
ForwardResult<T> forward(const EncoderState<T>& state, const Batch& batch, Mode mode,
                         Rng* dropout_rng, bool capture_attention) {
  return run_forward<T>(state, batch, mode, dropout_rng, capture_attention, nullptr);
}

template <typename T>
LossBreakdown mlm_nsp_loss(const Mat<T>& mlm_logits, const Mat<T>& nsp_logits,
                           const Batch& batch) {
  return compute_loss<T>(mlm_logits, nsp_logits, batch, nullptr, nullptr);
}

template <typename T>
LossAndGradients<T> loss_and_gradients(const EncoderState<T>& state, const Batch& batch,
                                       Mode mode, Rng* dropout_rng) {
  const ModelConfig& cfg = state.config;
  const int B = batch.batch_size;
  const int S = batch.seq_len;
  const int H = cfg.hidden_size;
  const int A = cfg.num_heads;
  const int D = cfg.head_size();
  const Eigen::Index N = static_cast<Eigen::Index>(B) * S;
  const bool drop = mode == Mode::kTrain && cfg.dropout_rate > 0;
  const T inv_sqrt_d = static_cast<T>(1) / std::sqrt(static_cast<T>(D));

  ForwardCache<T> cache;
  ForwardResult<T> fwd = run_forward<T>(state, batch, mode, dropout_rng, false, &cache);

  LossAndGradients<T> out;
  out.gradients = EncoderState<T>::zeros(cfg);
  EncoderState<T>& g = out.gradients;

  Mat<T> dmlm_logits, dnsp_logits;
  out.loss = compute_loss<T>(fwd.mlm_logits, fwd.nsp_logits, batch, &dmlm_logits, &dnsp_logits);

  // MLM head backward. logits = m2 E^T + b.
  Mat<T> dxf(N, H);
  g.mlm_output_bias.row(0) += dmlm_logits.colwise().sum();
  g.token_embedding.noalias() += dmlm_logits.transpose() * cache.m2;
  Mat<T> dm2(N, H);
  dm2.noalias() = dmlm_logits * state.token_embedding;
  Mat<T> dm1;
  layer_norm_backward(dm2, cache.m_xhat, cache.m_inv_std, state.mlm_ln_gamma, &dm1,
                      &g.mlm_ln_gamma, &g.mlm_ln_beta);
  Mat<T> dzm = dm1.cwiseProduct(cache.zm.unaryExpr([](T t) { return gelu_grad(t); }));
  g.mlm_dense_w.noalias() += cache.xf.transpose() * dzm;
  g.mlm_dense_b.row(0) += dzm.colwise().sum();
  dxf.noalias() = dzm * state.mlm_dense_w.transpose();

  // NSP head backward through the tanh pooler at position 0.
  g.nsp_w.noalias() += cache.pooled.transpose() * dnsp_logits;
  g.nsp_b.row(0) += dnsp_logits.colwise().sum();
  Mat<T> dpooled(B, H);
  dpooled.noalias() = dnsp_logits * state.nsp_w.transpose();
  Mat<T> dpre = dpooled.cwiseProduct(
      cache.pooled.unaryExpr([](T t) { return static_cast<T>(1) - t * t; }));
  g.pooler_b.row(0) += dpre.colwise().sum();
  for (int b = 0; b < B; ++b) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(b) * S;
    g.pooler_w.noalias() += cache.xf.row(r0).transpose() * dpre.row(b);
    dxf.row(r0).noalias() += dpre.row(b) * state.pooler_w.transpose();
  }

  // Encoder layers in reverse.
  Mat<T> dx = std::move(dxf);
  for (int l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerParams<T>& p = state.layers[l];
    LayerParams<T>& gp = g.layers[l];
    LayerCache<T>& lc = cache.layers[l];

    Mat<T> dr2;
    layer_norm_backward(dx, lc.ffn_xhat, lc.ffn_inv_std, p.ffn_ln_gamma, &dr2, &gp.ffn_ln_gamma,
                        &gp.ffn_ln_beta);
    Mat<T> dy = dr2;
    Mat<T> dffn_out = drop ? Mat<T>(dr2.cwiseProduct(lc.ffn_out_mask)) : dr2;
    gp.ffn_w2.noalias() += lc.h1.transpose() * dffn_out;
    gp.ffn_b2.row(0) += dffn_out.colwise().sum();
    Mat<T> dh1(N, cfg.ffn_size);
    dh1.noalias() = dffn_out * p.ffn_w2.transpose();
    Mat<T> dz1 = dh1.cwiseProduct(lc.z1.unaryExpr([](T t) { return gelu_grad(t); }));
    gp.ffn_w1.noalias() += lc.y.transpose() * dz1;
    gp.ffn_b1.row(0) += dz1.colwise().sum();
    dy.noalias() += dz1 * p.ffn_w1.transpose();

    Mat<T> dr1;
    layer_norm_backward(dy, lc.attn_xhat, lc.attn_inv_std, p.attn_ln_gamma, &dr1,
                        &gp.attn_ln_gamma, &gp.attn_ln_beta);
    Mat<T> dxin = dr1;
    Mat<T> dattn_out = drop ? Mat<T>(dr1.cwiseProduct(lc.attn_out_mask)) : dr1;
    gp.attention.wo.noalias() += lc.ctx.transpose() * dattn_out;
    gp.attention.bo.row(0) += dattn_out.colwise().sum();
    Mat<T> dctx(N, H);
    dctx.noalias() = dattn_out * p.attention.wo.transpose();

    Mat<T> dq = Mat<T>::Zero(N, H);
    Mat<T> dk = Mat<T>::Zero(N, H);
    Mat<T> dv = Mat<T>::Zero(N, H);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < A; ++h) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * S;
        const Eigen::Index c0 = static_cast<Eigen::Index>(h) * D;
        const size_t idx = static_cast<size_t>(b) * A + h;
        auto qb = lc.q.block(r0, c0, S, D);
        auto kb = lc.k.block(r0, c0, S, D);
        auto vb = lc.v.block(r0, c0, S, D);
        const Mat<T>& probs = lc.probs[idx];
        const Mat<T>& dropped = lc.probs_dropped[idx];
        auto dctx_b = dctx.block(r0, c0, S, D);

        Mat<T> dPd(S, S);
        dPd.noalias() = dctx_b * vb.transpose();
        dv.block(r0, c0, S, D).noalias() += dropped.transpose() * dctx_b;
        Mat<T> dP = drop ? Mat<T>(dPd.cwiseProduct(lc.prob_masks[idx])) : dPd;
        Mat<T> dscores(S, S);
        for (int i = 0; i < S; ++i) {
          const T dot = dP.row(i).dot(probs.row(i));
          dscores.row(i) =
              (probs.row(i).array() * (dP.row(i).array() - dot)).matrix();
        }
        dscores *= inv_sqrt_d;
        dq.block(r0, c0, S, D).noalias() += dscores * kb;
        dk.block(r0, c0, S, D).noalias() += dscores.transpose() * qb;
      }
    }
    gp.attention.wq.noalias() += lc.xin.transpose() * dq;
    gp.attention.bq.row(0) += dq.colwise().sum();
    gp.attention.wk.noalias() += lc.xin.transpose() * dk;
    gp.attention.bk.row(0) += dk.colwise().sum();
    gp.attention.wv.noalias() += lc.xin.transpose() * dv;
    gp.attention.bv.row(0) += dv.colwise().sum();
    dxin.noalias() += dq * p.attention.wq.transpose();
    dxin.noalias() += dk * p.attention.wk.transpose();
    dxin.noalias() += dv * p.attention.wv.transpose();
    dx = std::move(dxin);
  }

  // Embedding block backward: dropout, layer norm, then scatter-add.
  if (drop) dx = dx.cwiseProduct(cache.emb_drop_mask);
  Mat<T> dx0;
  layer_norm_backward(dx, cache.emb_xhat, cache.emb_inv_std, state.emb_ln_gamma, &dx0,
                      &g.emb_ln_gamma, &g.emb_ln_beta);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < S; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(b) * S + t;
      g.token_embedding.row(batch.token_ids[batch.flat(b, t)]) += dx0.row(r);
      g.position_embedding.row(t) += dx0.row(r);
      g.segment_embedding.row(batch.segment_ids[batch.flat(b, t)]) += dx0.row(r);
    }
  }
  return out;
}

uint64_t state_fingerprint(const EncoderState<float>& state) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](uint32_t bits) {
    for (int s = 0; s < 32; s += 8) {
      h ^= (bits >> s) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& ref : state.named_tensors()) {
    const Mat<float>& m = *ref.tensor;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        uint32_t bits;
        std::memcpy(&bits, &m(i, j), sizeof(bits));
        mix(bits);
      }
    }
  }
  return h;
}

int64_t count_parameters(const ModelConfig& config) {
  config.validate();
  const int64_t H = config.hidden_size;
  const int64_t F = config.ffn_size;
  const int64_t V = config.vocab_size;
  const int64_t embeddings = V * H + config.max_positions * H + config.segment_types * H + 2 * H;
  const int64_t attention = 4 * (H * H + H);
  const int64_t ffn = H * F + F + F * H + H;
  const int64_t per_layer = attention + 2 * H + ffn + 2 * H;
  const int64_t mlm_head = H * H + H + 2 * H + V;  // decoder weight is tied
  const int64_t pooler = H * H + H;
  const int64_t nsp = 2 * H + 2;
  return embeddings + config.num_layers * per_layer + mlm_head + pooler + nsp;
}

double gelu_activation(double x) { return gelu(x); }

template struct EncoderState<float>;
template struct EncoderState<double>;
template EncoderState<float> init_model<float>(const ModelConfig&, uint64_t);
template EncoderState<double> init_model<double>(const ModelConfig&, uint64_t);
template ForwardResult<float> forward<float>(const EncoderState<float>&, const Batch&, Mode,
                                             Rng*, bool);
template ForwardResult<double> forward<double>(const EncoderState<double>&, const Batch&, Mode,
                                               Rng*, bool);
template LossBreakdown mlm_nsp_loss<float>(const Mat<float>&, const Mat<float>&, const Batch&);
template LossBreakdown mlm_nsp_loss<double>(const Mat<double>&, const Mat<double>&, const Batch&);
template LossAndGradients<float> loss_and_gradients<float>(const EncoderState<float>&,
                                                           const Batch&, Mode, Rng*);
template LossAndGradients<double> loss_and_gradients<double>(const EncoderState<double>&,
                                                             const Batch&, Mode, Rng*);

}  // namespace uzlm::model
