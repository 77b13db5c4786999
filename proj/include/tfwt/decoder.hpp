#pragma once

// Weight decoder: scalar weights are lifted to d-wide tokens, attend to the
// encoder output Z through cross-attention, and are projected back to one
// scalar per (sample, feature). A learned per-feature embedding is added to
// the lifted tokens so queries differ across features even when every weight
// is equal. The output projection starts at zero weight and unit bias, so an
// untrained decoder returns exactly 1.0 everywhere.

#include <vector>

#include "tfwt/data_io.hpp"
#include "tfwt/encoder.hpp"

namespace tfwt {

using DecoderConfig = EncoderConfig;

struct WeightMatrix {
  Matrix values;  // n x K
  std::size_t version = 0;

  static WeightMatrix ones(std::size_t n, std::size_t k);
  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

struct DecoderLayerParams {
  AttentionParams cross;
  LayerNormParams norm1;
  FeedForward ff;
  LayerNormParams norm2;

  DecoderLayerParams() = default;
  DecoderLayerParams(const DecoderConfig& cfg, Rng& rng);
  ParamList params() const;
};

/// Queries from lifted weight tokens, keys/values from Z; both [n*K, d].
Tensor cross_attention(Tape& t, const Tensor& weight_tokens, const Tensor& z, std::size_t n, std::size_t tokens,
                       std::size_t heads, const AttentionParams& p, Tensor* probs = nullptr);

class DecoderStack {
 public:
  DecoderStack() = default;
  DecoderStack(const DecoderConfig& cfg, std::size_t num_features, Rng& rng);

  /// w [n, K] -> tokens [n*K, d] via w * lift_weight + lift_bias.
  Tensor lift_weights(Tape& t, const Tensor& w) const;

  /// z [n, K, d], w_init [n, K] -> W [n, K]. Query tokens are
  /// lift_weights(w_init) plus the feature embedding of each column.
  Tensor decode(Tape& t, const Tensor& z, const Tensor& w_init, bool training, Rng& rng) const;

  const DecoderConfig& config() const { return cfg_; }
  std::vector<DecoderLayerParams>& layers() { return layers_; }
  Tensor& lift_weight() { return lift_w_; }
  Tensor& lift_bias() { return lift_b_; }
  Tensor& feature_embedding() { return feature_embed_; }
  Tensor& out_weight() { return out_w_; }
  Tensor& out_bias() { return out_b_; }
  ParamList params() const;

 private:
  DecoderConfig cfg_;
  Tensor lift_w_, lift_b_;  // [1, d], [d]
  Tensor feature_embed_;    // [K, d]
  std::vector<DecoderLayerParams> layers_;
  Tensor out_w_, out_b_;  // [d, 1], [1]
};

/// Column expansion of W onto the numeric view: result[:, p] =
/// W[:, layout.source_feature[p]] * x[:, p]. One-hot blocks of a discrete
/// feature are all scaled by that feature's weight.
Matrix apply_weights(const Matrix& w, const Matrix& x, const NumericLayout& layout);
Tensor apply_weights(Tape& t, const Tensor& w, const Tensor& x, const NumericLayout& layout);

}  // namespace tfwt
