#pragma once

// Dense float64 tensors and a define-by-run reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage. Values are
// treated as immutable once an operation has produced them; only leaf
// parameters are mutated, and only by optimizers and initializers.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tfwt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  const std::vector<double>& values() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<double> grad();
  std::span<const double> grad_view() const;
  void zero_grad();
  void drop_grad();

  /// Independent copy of the values, detached from any tape.
  Tensor clone() const;

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
  std::shared_ptr<Storage> s_;
};

/// Records executed operations in order and replays their local gradients in
/// reverse. One tape per thread; independent tapes never share nodes.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Register `out` as produced from `inputs`. If no input requires a
  /// gradient nothing is recorded. `fn` reads out.grad() and accumulates into
  /// the inputs' grads.
  Tensor record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn);

  /// Seed d(loss)/d(loss)=1 and run every recorded node once in reverse order.
  /// Leaf gradients accumulate across calls; intermediate gradients are reset.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

 private:
  struct Node {
    Tensor out;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

/// Throws NumericError naming `where` when any entry is NaN or infinite.
void check_finite(std::span<const double> v, const char* where);

}  // namespace tfwt
