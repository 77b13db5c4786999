#pragma once

// Small building blocks shared by the transformer, the PPO networks and the
// MLP classifier: named parameter lists, dense layers and Adam.

#include <string>
#include <vector>

#include "tfwt/numerics.hpp"
#include "tfwt/ops.hpp"
#include "tfwt/rng.hpp"

namespace tfwt {

struct NamedParam {
  std::string name;
  Tensor value;
};
using ParamList = std::vector<NamedParam>;

/// Append `src` to `dst`, prefixing every name with `prefix`.
void append_params(ParamList& dst, const std::string& prefix, const ParamList& src);

/// Zero-mean uniform init with half-width `scale`.
Tensor uniform_param(Shape shape, double scale, Rng& rng);

/// y = x W + b with W stored [in, out].
struct Dense {
  Tensor weight;
  Tensor bias;

  Dense() = default;
  /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights, zero bias.
  Dense(std::size_t in, std::size_t out, Rng& rng);

  Tensor forward(Tape& t, const Tensor& x) const { return ops::linear(t, x, weight, bias); }
  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }
  ParamList params() const { return {{"weight", weight}, {"bias", bias}}; }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg);
  explicit Adam(const ParamList& params, AdamConfig cfg);

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

void zero_grads(const ParamList& params);

/// Deep copy of parameter values (for best-epoch snapshots).
std::vector<std::vector<double>> snapshot(const ParamList& params);
void restore(const ParamList& params, const std::vector<std::vector<double>>& snap);

}  // namespace tfwt
