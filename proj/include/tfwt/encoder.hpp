#pragma once

// Transformer encoder over the K feature tokens of each sample. There is no
// positional encoding, so the stack is equivariant to feature permutations.

#include <vector>

#include "json.hpp"
#include "tfwt/nn.hpp"

namespace tfwt {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d_model = 32;
  std::size_t ff_width = 0;  // 0 -> 4 * d_model
  double dropout = 0.2;

  std::size_t head_width() const { return d_model / heads; }
  std::size_t ffn() const { return ff_width ? ff_width : 4 * d_model; }
  /// Throws ConfigError on d_model % heads != 0 or zero layers.
  void validate() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// Query/key/value/output projections, each d x d. Head i uses column block
/// [i*d_k, (i+1)*d_k) of wq, wk and wv.
struct AttentionParams {
  Tensor wq, wk, wv, wo;

  AttentionParams() = default;
  AttentionParams(std::size_t d, Rng& rng);
  ParamList params() const { return {{"wq", wq}, {"wk", wk}, {"wv", wv}, {"wo", wo}}; }
};

/// softmax(q k^T / sqrt(d_k)) v over the leading batch axis. q, k, v are
/// [B, tokens, d_k]. If `probs` is given it receives the attention weights.
Tensor self_attention(Tape& t, const Tensor& q, const Tensor& k, const Tensor& v, Tensor* probs = nullptr);

/// Multi-head attention with queries from `x_query` and keys/values from
/// `x_context`, both [n*tokens, d]. Returns Concat(head_1..head_h) W^O.
Tensor multi_head(Tape& t, const Tensor& x_query, const Tensor& x_context, std::size_t n, std::size_t tokens,
                  std::size_t heads, const AttentionParams& p, Tensor* probs = nullptr);

struct FeedForward {
  Dense inner, outer;
  FeedForward() = default;
  FeedForward(std::size_t d, std::size_t width, Rng& rng) : inner(d, width, rng), outer(width, d, rng) {}
  Tensor forward(Tape& t, const Tensor& x) const { return outer.forward(t, ops::relu(t, inner.forward(t, x))); }
  ParamList params() const;
};

struct LayerNormParams {
  Tensor gain, shift;
  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t d) : gain(Tensor::filled({d}, 1.0, true)), shift(Tensor::zeros({d}, true)) {}
  Tensor forward(Tape& t, const Tensor& x) const { return ops::layernorm(t, x, gain, shift); }
  ParamList params() const { return {{"gain", gain}, {"shift", shift}}; }
};

struct EncoderLayerParams {
  AttentionParams attn;
  LayerNormParams norm1;
  FeedForward ff;
  LayerNormParams norm2;

  EncoderLayerParams() = default;
  EncoderLayerParams(const EncoderConfig& cfg, Rng& rng);
  ParamList params() const;
};

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(const EncoderConfig& cfg, Rng& rng);

  /// tokens [n, K, d] -> Z [n, K, d]. Each layer is post-norm:
  /// x = LN(x + MHA(x)); x = LN(x + FFN(x)).
  Tensor encode(Tape& t, const Tensor& tokens, bool training, Rng& rng) const;

  const EncoderConfig& config() const { return cfg_; }
  std::vector<EncoderLayerParams>& layers() { return layers_; }
  ParamList params() const;

 private:
  EncoderConfig cfg_;
  std::vector<EncoderLayerParams> layers_;
};

}  // namespace tfwt
