#include "tfwt/nn.hpp"

#include <cmath>

#include "tfwt/errors.hpp"

namespace tfwt {

void append_params(ParamList& dst, const std::string& prefix, const ParamList& src) {
  for (const auto& p : src) dst.push_back({prefix + p.name, p.value});
}

Tensor uniform_param(Shape shape, double scale, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = rng.uniform(-scale, scale);
  return t;
}

Dense::Dense(std::size_t in, std::size_t out, Rng& rng)
    : weight(uniform_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias(Tensor::zeros({out}, true)) {}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

namespace {
std::vector<Tensor> values_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value);
  return out;
}
}  // namespace

Adam::Adam(const ParamList& params, AdamConfig cfg) : Adam(values_of(params), cfg) {}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      w[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void zero_grads(const ParamList& params) {
  for (auto p : params) p.value.zero_grad();
}

std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.value.values());
  return out;
}

void restore(const ParamList& params, const std::vector<std::vector<double>>& snap) {
  if (snap.size() != params.size()) throw ContractError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].value;
    auto d = t.mutable_data();
    if (d.size() != snap[i].size()) throw ContractError("restore: size mismatch for " + params[i].name);
    std::copy(snap[i].begin(), snap[i].end(), d.begin());
  }
}

}  // namespace tfwt
