#include "tfwt/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tfwt/errors.hpp"

namespace tfwt::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap cmap(std::span<const double> s, std::size_t r, std::size_t c) {
  return CMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MMap mmap(std::span<double> s, std::size_t r, std::size_t c) {
  return MMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void need_rank(const Tensor& x, std::size_t r, const char* op) {
  if (x.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_str(x.shape()));
  }
}

void need_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x) { return x.shape().back(); }

// Adds g into in.grad() when `in` participates in differentiation.
template <typename F>
void accumulate(Tensor in, F&& f) {
  if (!in.requires_grad()) return;
  f(in.grad());
}

}  // namespace

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
  need_rank(a, 2, "matmul");
  need_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, p});
  mmap(out.mutable_data(), m, p).noalias() = cmap(a.data(), m, n) * cmap(b.data(), n, p);
  return t.record(out, {a, b}, [out, a, b, m, n, p] {
    Tensor o = out;
    auto g = cmap(o.grad(), m, p);
    accumulate(a, [&](std::span<double> ga) {
      mmap(ga, m, n).noalias() += g * cmap(b.data(), n, p).transpose();
    });
    accumulate(b, [&](std::span<double> gb) {
      mmap(gb, n, p).noalias() += cmap(a.data(), m, n).transpose() * g;
    });
  });
}

Tensor bmm(Tape& t, const Tensor& a, const Tensor& b, bool transpose_b) {
  need_rank(a, 3, "bmm");
  need_rank(b, 3, "bmm");
  const std::size_t B = a.dim(0), m = a.dim(1), n = a.dim(2);
  const std::size_t p = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bn = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != B || bn != n) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (transpose_b ? "^T" : ""));
  }
  const std::size_t br = transpose_b ? p : n, bc = transpose_b ? n : p;
  Tensor out = Tensor::zeros({B, m, p});
  {
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < B; ++i) {
      auto A = cmap(a.data().subspan(i * m * n, m * n), m, n);
      auto Bm = cmap(b.data().subspan(i * br * bc, br * bc), br, bc);
      auto O = mmap(od.subspan(i * m * p, m * p), m, p);
      if (transpose_b)
        O.noalias() = A * Bm.transpose();
      else
        O.noalias() = A * Bm;
    }
  }
  return t.record(out, {a, b}, [out, a, b, B, m, n, p, br, bc, transpose_b] {
    Tensor o = out;
    auto gd = o.grad();
    for (std::size_t i = 0; i < B; ++i) {
      auto G = cmap(gd.subspan(i * m * p, m * p), m, p);
      auto A = cmap(a.data().subspan(i * m * n, m * n), m, n);
      auto Bm = cmap(b.data().subspan(i * br * bc, br * bc), br, bc);
      accumulate(a, [&](std::span<double> ga) {
        auto GA = mmap(ga.subspan(i * m * n, m * n), m, n);
        if (transpose_b)
          GA.noalias() += G * Bm;
        else
          GA.noalias() += G * Bm.transpose();
      });
      accumulate(b, [&](std::span<double> gb) {
        auto GB = mmap(gb.subspan(i * br * bc, br * bc), br, bc);
        if (transpose_b)
          GB.noalias() += G.transpose() * A;
        else
          GB.noalias() += A.transpose() * G;
      });
    }
  });
}

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  need_same(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] + bd[i];
  return t.record(out, {a, b}, [out, a, b] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  });
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
  need_same(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] - bd[i];
  return t.record(out, {a, b}, [out, a, b] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  });
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
  need_same(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * bd[i];
  return t.record(out, {a, b}, [out, a, b] {
    Tensor oo = out;
    auto g = oo.grad();
    auto ad = a.data(), bd = b.data();
    accumulate(a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
    });
    accumulate(b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
    });
  });
}

Tensor minimum(Tape& t, const Tensor& a, const Tensor& b) {
  need_same(a, b, "minimum");
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::min(ad[i], bd[i]);
  return t.record(out, {a, b}, [out, a, b] {
    Tensor oo = out;
    auto g = oo.grad();
    auto ad = a.data(), bd = b.data();
    // Ties route the gradient to `a`.
    accumulate(a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (ad[i] <= bd[i]) ga[i] += g[i];
    });
    accumulate(b, [&](std::span<double> gb) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (bd[i] < ad[i]) gb[i] += g[i];
    });
  });
}

Tensor scale(Tape& t, const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] * s;
  return t.record(out, {x}, [out, x, s] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
    });
  });
}

Tensor add_scalar(Tape& t, const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] + s;
  return t.record(out, {x}, [out, x] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Tensor relu(Tape& t, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  return t.record(out, {x}, [out, x] {
    Tensor oo = out;
    auto g = oo.grad();
    auto xd = x.data();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] > 0.0) gx[i] += g[i];
    });
  });
}

Tensor exp(Tape& t, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(xd[i]);
  check_finite(out.data(), "exp");
  return t.record(out, {x}, [out, x] {
    Tensor oo = out;
    auto g = oo.grad();
    auto od = out.data();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * od[i];
    });
  });
}

Tensor clamp(Tape& t, const Tensor& x, double lo, double hi) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::clamp(xd[i], lo, hi);
  return t.record(out, {x}, [out, x, lo, hi] {
    Tensor oo = out;
    auto g = oo.grad();
    auto xd = x.data();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] >= lo && xd[i] <= hi) gx[i] += g[i];
    });
  });
}

Tensor dropout(Tape& t, const Tensor& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] * mask[i];
  return t.record(out, {x}, [out, x, mask = std::move(mask)] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  });
}

Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias) {
  need_rank(bias, 1, "add_bias");
  const std::size_t c = last_dim(x);
  if (bias.dim(0) != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data(), bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) o[r * c + j] = xd[r * c + j] + bd[j];
  return t.record(out, {x, bias}, [out, x, bias, rows, c] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    accumulate(bias, [&](std::span<double> gb) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
    });
  });
}

Tensor linear(Tape& t, const Tensor& x, const Tensor& w, const std::optional<Tensor>& b) {
  Tensor y = matmul(t, x, w);
  return b ? add_bias(t, y, *b) : y;
}

Tensor broadcast_rows(Tape& t, const Tensor& v, std::size_t n) {
  need_rank(v, 1, "broadcast_rows");
  const std::size_t c = v.dim(0);
  Tensor out = Tensor::zeros({n, c});
  auto o = out.mutable_data();
  auto vd = v.data();
  for (std::size_t r = 0; r < n; ++r) std::copy(vd.begin(), vd.end(), o.begin() + r * c);
  return t.record(out, {v}, [out, v, n, c] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(v, [&](std::span<double> gv) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[r * c + j];
    });
  });
}

Tensor softmax_rows(Tape& t, const Tensor& x) {
  check_finite(x.data(), "softmax_rows input");
  const std::size_t c = last_dim(x);
  const std::size_t rows = x.numel() / c;
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * c;
    double* orow = o.data() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (orow[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) orow[j] /= z;
  }
  return t.record(out, {x}, [out, x, rows, c] {
    Tensor oo = out;
    auto g = oo.grad();
    auto y = out.data();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
      }
    });
  });
}

Tensor layernorm(Tape& t, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = last_dim(x);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layernorm: gain/bias width " + std::to_string(gamma.numel()) +
                         " vs input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel()), inv_std(rows);
  auto o = out.mutable_data();
  auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xr[j] - mu) * inv_std[r];
      o[r * c + j] = gd[j] * xhat[r * c + j] + bd[j];
    }
  }
  return t.record(out, {x, gamma, beta},
                  [out, x, gamma, beta, rows, c, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)] {
                    Tensor oo = out;
                    auto g = oo.grad();
                    auto gd = gamma.data();
                    accumulate(gamma, [&](std::span<double> gg) {
                      for (std::size_t i = 0; i < g.size(); ++i) gg[i % c] += g[i] * xhat[i];
                    });
                    accumulate(beta, [&](std::span<double> gb) {
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
                    });
                    accumulate(x, [&](std::span<double> gx) {
                      const double inv_c = 1.0 / static_cast<double>(c);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double m1 = 0.0, m2 = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = g[r * c + j] * gd[j];
                          m1 += dxh;
                          m2 += dxh * xhat[r * c + j];
                        }
                        m1 *= inv_c;
                        m2 *= inv_c;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = g[r * c + j] * gd[j];
                          gx[r * c + j] += inv_std[r] * (dxh - m1 - xhat[r * c + j] * m2);
                        }
                      }
                    });
                  });
}

Tensor sum(Tape& t, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  return t.record(out, {x}, [out, x] {
    Tensor oo = out;
    const double g = oo.grad()[0];
    accumulate(x, [&](std::span<double> gx) {
      for (auto& v : gx) v += g;
    });
  });
}

Tensor mean(Tape& t, const Tensor& x) {
  return scale(t, sum(t, x), 1.0 / static_cast<double>(x.numel()));
}

Tensor cross_entropy(Tape& t, const Tensor& logits, std::span<const int> labels) {
  need_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  check_finite(logits.data(), "cross_entropy logits");
  std::vector<double> probs(n * c);
  std::vector<int> lab(labels.begin(), labels.end());
  auto ld = logits.data();
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= c) {
      throw ContractError("cross_entropy: label " + std::to_string(lab[r]) + " outside [0," +
                          std::to_string(c) + ")");
    }
    const double* lr = ld.data() + r * c;
    const double mx = *std::max_element(lr, lr + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(lr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(lr[j] - lse);
    loss -= lr[lab[r]] - lse;
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(n));
  return t.record(out, {logits},
                  [out, logits, n, c, probs = std::move(probs), lab = std::move(lab)] {
                    Tensor oo = out;
                    const double g = oo.grad()[0] / static_cast<double>(n);
                    accumulate(logits, [&](std::span<double> gl) {
                      for (std::size_t r = 0; r < n; ++r) {
                        for (std::size_t j = 0; j < c; ++j) gl[r * c + j] += g * probs[r * c + j];
                        gl[r * c + static_cast<std::size_t>(lab[r])] -= g;
                      }
                    });
                  });
}

Tensor gather_rows(Tape& t, const Tensor& table, std::span<const std::size_t> rows) {
  need_rank(table, 2, "gather_rows");
  const std::size_t R = table.dim(0), d = table.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out = Tensor::zeros({idx.size(), d});
  auto o = out.mutable_data();
  auto td = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= R) {
      throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " of table " +
                           shape_str(table.shape()));
    }
    std::copy_n(td.begin() + idx[i] * d, d, o.begin() + i * d);
  }
  return t.record(out, {table}, [out, table, d, idx = std::move(idx)] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(table, [&](std::span<double> gt) {
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
    });
  });
}

Tensor gather_cols(Tape& t, const Tensor& x, std::span<const std::size_t> cols) {
  need_rank(x, 2, "gather_cols");
  const std::size_t n = x.dim(0), c = x.dim(1), m = cols.size();
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  for (auto j : idx)
    if (j >= c) throw DimensionError("gather_cols: column " + std::to_string(j) + " of " +
                                     shape_str(x.shape()));
  Tensor out = Tensor::zeros({n, m});
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) o[r * m + j] = xd[r * c + idx[j]];
  return t.record(out, {x}, [out, x, n, c, m, idx = std::move(idx)] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < m; ++j) gx[r * c + idx[j]] += g[r * m + j];
    });
  });
}

Tensor interleave(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("interleave: no parts");
  const std::size_t K = parts.size();
  const std::size_t n = parts[0].dim(0), d = parts[0].dim(1);
  for (const auto& p : parts) {
    need_rank(p, 2, "interleave");
    if (p.dim(0) != n || p.dim(1) != d)
      throw DimensionError("interleave: part " + shape_str(p.shape()) + " vs " +
                           shape_str(parts[0].shape()));
  }
  Tensor out = Tensor::zeros({n * K, d});
  auto o = out.mutable_data();
  for (std::size_t k = 0; k < K; ++k) {
    auto pd = parts[k].data();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pd.begin() + i * d, d, o.begin() + (i * K + k) * d);
  }
  return t.record(out, parts, [out, parts, n, K, d] {
    Tensor oo = out;
    auto g = oo.grad();
    for (std::size_t k = 0; k < K; ++k) {
      accumulate(parts[k], [&](std::span<double> gp) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gp[i * d + j] += g[(i * K + k) * d + j];
      });
    }
  });
}

Tensor split_heads(Tape& t, const Tensor& x, std::size_t n, std::size_t tokens,
                   std::size_t heads) {
  need_rank(x, 2, "split_heads");
  const std::size_t d = x.dim(1);
  if (x.dim(0) != n * tokens || heads == 0 || d % heads != 0) {
    throw DimensionError("split_heads: cannot split " + shape_str(x.shape()) + " into n=" +
                         std::to_string(n) + " tokens=" + std::to_string(tokens) +
                         " heads=" + std::to_string(heads));
  }
  const std::size_t dk = d / heads;
  Tensor out = Tensor::zeros({n * heads, tokens, dk});
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < tokens; ++k)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.begin() + (i * tokens + k) * d + h * dk, dk,
                    o.begin() + ((i * heads + h) * tokens + k) * dk);
  return t.record(out, {x}, [out, x, n, tokens, heads, d, dk] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < tokens; ++k)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t j = 0; j < dk; ++j)
              gx[(i * tokens + k) * d + h * dk + j] += g[((i * heads + h) * tokens + k) * dk + j];
    });
  });
}

Tensor merge_heads(Tape& t, const Tensor& x, std::size_t n, std::size_t heads) {
  need_rank(x, 3, "merge_heads");
  if (x.dim(0) != n * heads) {
    throw DimensionError("merge_heads: leading axis " + std::to_string(x.dim(0)) + " != n*heads");
  }
  const std::size_t tokens = x.dim(1), dk = x.dim(2), d = heads * dk;
  Tensor out = Tensor::zeros({n * tokens, d});
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < tokens; ++k)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.begin() + ((i * heads + h) * tokens + k) * dk, dk,
                    o.begin() + (i * tokens + k) * d + h * dk);
  return t.record(out, {x}, [out, x, n, tokens, heads, d, dk] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < tokens; ++k)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t j = 0; j < dk; ++j)
              gx[((i * heads + h) * tokens + k) * dk + j] += g[(i * tokens + k) * d + h * dk + j];
    });
  });
}

Tensor reshape(Tape& t, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), x.values());
  return t.record(out, {x}, [out, x] {
    Tensor oo = out;
    auto g = oo.grad();
    accumulate(x, [&](std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

}  // namespace tfwt::ops
