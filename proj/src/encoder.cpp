#include "tfwt/encoder.hpp"

#include <cmath>

#include "tfwt/errors.hpp"

namespace tfwt {

void EncoderConfig::validate() const {
  if (layers == 0) throw ConfigError("encoder: layers must be >= 1");
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("encoder: d_model " + std::to_string(d_model) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must lie in [0, 1)");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"layers", layers}, {"heads", heads}, {"d_model", d_model}, {"ff_width", ffn()}, {"dropout", dropout}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.ff_width = j.value("ff_width", c.ff_width);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

AttentionParams::AttentionParams(std::size_t d, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  wq = uniform_param({d, d}, s, rng);
  wk = uniform_param({d, d}, s, rng);
  wv = uniform_param({d, d}, s, rng);
  wo = uniform_param({d, d}, s, rng);
}

Tensor self_attention(Tape& t, const Tensor& q, const Tensor& k, const Tensor& v, Tensor* probs) {
  const std::size_t dk = q.dim(2);
  if (dk == 0) throw DimensionError("self_attention: zero key width");
  Tensor scores = ops::scale(t, ops::bmm(t, q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(dk)));
  Tensor att = ops::softmax_rows(t, scores);
  if (probs) *probs = att;
  return ops::bmm(t, att, v);
}

Tensor multi_head(Tape& t, const Tensor& x_query, const Tensor& x_context, std::size_t n, std::size_t tokens,
                  std::size_t heads, const AttentionParams& p, Tensor* probs) {
  const std::size_t d = x_query.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  }
  Tensor q = ops::split_heads(t, ops::matmul(t, x_query, p.wq), n, tokens, heads);
  Tensor k = ops::split_heads(t, ops::matmul(t, x_context, p.wk), n, tokens, heads);
  Tensor v = ops::split_heads(t, ops::matmul(t, x_context, p.wv), n, tokens, heads);
  Tensor heads_out = self_attention(t, q, k, v, probs);
  return ops::matmul(t, ops::merge_heads(t, heads_out, n, heads), p.wo);
}

ParamList FeedForward::params() const {
  ParamList p;
  append_params(p, "inner.", inner.params());
  append_params(p, "outer.", outer.params());
  return p;
}

EncoderLayerParams::EncoderLayerParams(const EncoderConfig& cfg, Rng& rng)
    : attn(cfg.d_model, rng), norm1(cfg.d_model), ff(cfg.d_model, cfg.ffn(), rng), norm2(cfg.d_model) {}

ParamList EncoderLayerParams::params() const {
  ParamList p;
  append_params(p, "attn.", attn.params());
  append_params(p, "norm1.", norm1.params());
  append_params(p, "ff.", ff.params());
  append_params(p, "norm2.", norm2.params());
  return p;
}

EncoderStack::EncoderStack(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t i = 0; i < cfg_.layers; ++i) layers_.emplace_back(cfg_, rng);
}

Tensor EncoderStack::encode(Tape& t, const Tensor& tokens, bool training, Rng& rng) const {
  if (tokens.rank() != 3 || tokens.dim(2) != cfg_.d_model) {
    throw DimensionError("encode: expected [n, K, " + std::to_string(cfg_.d_model) + "], got " + shape_str(tokens.shape()));
  }
  const std::size_t n = tokens.dim(0), K = tokens.dim(1), d = cfg_.d_model;
  if (n == 0) throw ContractError("encode: empty batch");
  Tensor x = ops::reshape(t, tokens, {n * K, d});
  for (const auto& layer : layers_) {
    Tensor a = multi_head(t, x, x, n, K, cfg_.heads, layer.attn);
    x = layer.norm1.forward(t, ops::add(t, x, ops::dropout(t, a, cfg_.dropout, training, rng)));
    Tensor f = layer.ff.forward(t, x);
    x = layer.norm2.forward(t, ops::add(t, x, ops::dropout(t, f, cfg_.dropout, training, rng)));
  }
  return ops::reshape(t, x, {n, K, d});
}

ParamList EncoderStack::params() const {
  ParamList p;
  for (std::size_t i = 0; i < layers_.size(); ++i) append_params(p, "layer" + std::to_string(i) + ".", layers_[i].params());
  return p;
}

}  // namespace tfwt
