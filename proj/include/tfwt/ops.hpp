#pragma once

// Differentiable operations. Every op takes the tape it records on first; if
// no input requires a gradient the op runs without recording anything.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tfwt/numerics.hpp"
#include "tfwt/rng.hpp"

namespace tfwt::ops {

// Products.
Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
/// Batched product over the leading axis: [B,m,n]x[B,n,p], or [B,m,n]x[B,p,n]^T
/// when `transpose_b`.
Tensor bmm(Tape& t, const Tensor& a, const Tensor& b, bool transpose_b = false);

// Element-wise, equal shapes.
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor minimum(Tape& t, const Tensor& a, const Tensor& b);

// Element-wise, one input.
Tensor scale(Tape& t, const Tensor& x, double s);
Tensor add_scalar(Tape& t, const Tensor& x, double s);
Tensor relu(Tape& t, const Tensor& x);
Tensor exp(Tape& t, const Tensor& x);
/// Clamp to [lo, hi]; the gradient is zero where the clamp is active.
Tensor clamp(Tape& t, const Tensor& x, double lo, double hi);
/// Inverted dropout; identity (same handle) when `training` is false or rate is 0.
Tensor dropout(Tape& t, const Tensor& x, double rate, bool training, Rng& rng);

// Broadcasting over the last axis.
Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias);
Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const std::optional<Tensor>& b);
/// [c] -> [n, c] by repeating the vector n times.
Tensor broadcast_rows(Tape& t, const Tensor& v, std::size_t n);

// Row-wise over the last axis.
Tensor softmax_rows(Tape& t, const Tensor& x);
Tensor layernorm(Tape& t, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);

// Reductions and losses.
Tensor sum(Tape& t, const Tensor& x);
Tensor mean(Tape& t, const Tensor& x);
/// Mean negative log-likelihood of `labels` under softmax(logits); logits [n, C].
Tensor cross_entropy(Tape& t, const Tensor& logits, std::span<const int> labels);

// Indexing and layout.
Tensor gather_rows(Tape& t, const Tensor& table, std::span<const std::size_t> rows);
Tensor gather_cols(Tape& t, const Tensor& x, std::span<const std::size_t> cols);
/// K tensors of shape [n, d] -> [n*K, d] with row i*K+k taken from parts[k] row i.
Tensor interleave(Tape& t, const std::vector<Tensor>& parts);
/// [n*K, h*dk] -> [n*h, K, dk].
Tensor split_heads(Tape& t, const Tensor& x, std::size_t n, std::size_t tokens, std::size_t heads);
/// [n*h, K, dk] -> [n*K, h*dk].
Tensor merge_heads(Tape& t, const Tensor& x, std::size_t n, std::size_t heads);
Tensor reshape(Tape& t, const Tensor& x, Shape shape);

}  // namespace tfwt::ops
