#include "tfwt/decoder.hpp"

#include <cmath>

#include "tfwt/errors.hpp"

namespace tfwt {

WeightMatrix WeightMatrix::ones(std::size_t n, std::size_t k) {
  return {Matrix::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)), 0};
}

DecoderLayerParams::DecoderLayerParams(const DecoderConfig& cfg, Rng& rng)
    : cross(cfg.d_model, rng), norm1(cfg.d_model), ff(cfg.d_model, cfg.ffn(), rng), norm2(cfg.d_model) {}

ParamList DecoderLayerParams::params() const {
  ParamList p;
  append_params(p, "cross.", cross.params());
  append_params(p, "norm1.", norm1.params());
  append_params(p, "ff.", ff.params());
  append_params(p, "norm2.", norm2.params());
  return p;
}

Tensor cross_attention(Tape& t, const Tensor& weight_tokens, const Tensor& z, std::size_t n, std::size_t tokens,
                       std::size_t heads, const AttentionParams& p, Tensor* probs) {
  return multi_head(t, weight_tokens, z, n, tokens, heads, p, probs);
}

DecoderStack::DecoderStack(const DecoderConfig& cfg, std::size_t num_features, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  if (num_features == 0) throw ConfigError("decoder: needs at least one feature");
  const std::size_t d = cfg_.d_model;
  lift_w_ = uniform_param({1, d}, 1.0, rng);
  lift_b_ = uniform_param({d}, 1.0, rng);
  feature_embed_ = uniform_param({num_features, d}, 1.0, rng);
  for (std::size_t i = 0; i < cfg_.layers; ++i) layers_.emplace_back(cfg_, rng);
  out_w_ = Tensor::zeros({d, 1}, true);
  out_b_ = Tensor::filled({1}, 1.0, true);
}

Tensor DecoderStack::lift_weights(Tape& t, const Tensor& w) const {
  if (w.rank() != 2) throw DimensionError("lift_weights: expected [n, K], got " + shape_str(w.shape()));
  check_finite(w.data(), "lift_weights input");
  Tensor col = ops::reshape(t, w, {w.numel(), 1});
  return ops::add_bias(t, ops::matmul(t, col, lift_w_), lift_b_);
}

Tensor DecoderStack::decode(Tape& t, const Tensor& z, const Tensor& w_init, bool training, Rng& rng) const {
  if (z.rank() != 3 || z.dim(2) != cfg_.d_model) {
    throw DimensionError("decode: Z must be [n, K, " + std::to_string(cfg_.d_model) + "], got " + shape_str(z.shape()));
  }
  const std::size_t n = z.dim(0), K = z.dim(1), d = cfg_.d_model;
  if (K != feature_embed_.dim(0)) {
    throw DimensionError("decode: decoder built for " + std::to_string(feature_embed_.dim(0)) + " features, Z has " +
                         std::to_string(K));
  }
  if (w_init.rank() != 2 || w_init.dim(0) != n || w_init.dim(1) != K) {
    throw DimensionError("decode: initial weights " + shape_str(w_init.shape()) + " do not match Z " + shape_str(z.shape()));
  }
  Tensor zf = ops::reshape(t, z, {n * K, d});
  std::vector<std::size_t> column(n * K);
  for (std::size_t i = 0; i < column.size(); ++i) column[i] = i % K;
  Tensor y = ops::add(t, lift_weights(t, w_init), ops::gather_rows(t, feature_embed_, column));
  for (const auto& layer : layers_) {
    Tensor a = cross_attention(t, y, zf, n, K, cfg_.heads, layer.cross);
    y = layer.norm1.forward(t, ops::add(t, y, ops::dropout(t, a, cfg_.dropout, training, rng)));
    Tensor f = layer.ff.forward(t, y);
    y = layer.norm2.forward(t, ops::add(t, y, ops::dropout(t, f, cfg_.dropout, training, rng)));
  }
  Tensor w = ops::linear(t, y, out_w_, out_b_);
  return ops::reshape(t, w, {n, K});
}

ParamList DecoderStack::params() const {
  ParamList p{{"lift.weight", lift_w_}, {"lift.bias", lift_b_}, {"feature_embedding", feature_embed_}};
  for (std::size_t i = 0; i < layers_.size(); ++i) append_params(p, "layer" + std::to_string(i) + ".", layers_[i].params());
  p.push_back({"out.weight", out_w_});
  p.push_back({"out.bias", out_b_});
  return p;
}

Matrix apply_weights(const Matrix& w, const Matrix& x, const NumericLayout& layout) {
  if (w.rows() != x.rows() || static_cast<std::size_t>(x.cols()) != layout.width()) {
    throw DimensionError("apply_weights: W is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                         ", features are " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index p = 0; p < x.cols(); ++p) {
    const auto f = static_cast<Eigen::Index>(layout.source_feature[static_cast<std::size_t>(p)]);
    if (f >= w.cols()) throw DimensionError("apply_weights: layout references feature beyond W's columns");
    out.col(p) = w.col(f).cwiseProduct(x.col(p));
  }
  return out;
}

Tensor apply_weights(Tape& t, const Tensor& w, const Tensor& x, const NumericLayout& layout) {
  if (w.rank() != 2 || x.rank() != 2 || w.dim(0) != x.dim(0) || x.dim(1) != layout.width()) {
    throw DimensionError("apply_weights: W " + shape_str(w.shape()) + " vs features " + shape_str(x.shape()));
  }
  return ops::mul(t, ops::gather_cols(t, w, layout.source_feature), x);
}

}  // namespace tfwt
