#include "tfwt/numerics.hpp"

#include <cmath>
#include <sstream>

#include "tfwt/errors.hpp"

namespace tfwt {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

void check_finite(std::span<const double> v, const char* where) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << where << ": non-finite value " << v[i] << " at flat index " << i;
      throw NumericError(os.str());
    }
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  s->data.assign(shape_numel(shape), value);
  s->shape = std::move(shape);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

const Shape& Tensor::shape() const { return s_->shape; }
std::size_t Tensor::numel() const { return s_->data.size(); }
std::span<const double> Tensor::data() const { return s_->data; }
std::span<double> Tensor::mutable_data() { return s_->data; }
const std::vector<double>& Tensor::values() const { return s_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("Tensor::item on shape " + shape_str(shape()));
  return s_->data[0];
}

bool Tensor::requires_grad() const { return s_ && s_->requires_grad; }
void Tensor::set_requires_grad(bool on) { s_->requires_grad = on; }
bool Tensor::has_grad() const { return s_ && !s_->grad.empty(); }

std::span<double> Tensor::grad() {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  return s_->grad;
}

std::span<const double> Tensor::grad_view() const { return s_->grad; }

void Tensor::zero_grad() {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

void Tensor::drop_grad() {
  s_->grad.clear();
  s_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const { return from(s_->shape, s_->data, false); }

Tensor Tape::record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn) {
#ifndef NDEBUG
  check_finite(out.data(), "tape op output");
#endif
  if (!grad_enabled_) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.set_requires_grad(true);
  nodes_.push_back(Node{out, std::move(inputs), std::move(fn)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any parameter");
  }
  for (auto& n : nodes_) n.out.drop_grad();
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->out.has_grad()) continue;  // not reachable from the loss
    it->fn();
  }
}

}  // namespace tfwt
