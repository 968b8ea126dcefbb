#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "evcn/errors.hpp"
#include "evcn/rng.hpp"

namespace evcn {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& s);
size_t shape_numel(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;

  size_t numel() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Value-semantics handle over a shared tensor node. Data is immutable after
// an op produces it; leaves are mutated only by the optimizer between tapes.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t numel() const { return impl_->data.size(); }
  size_t dim(size_t i) const { return impl_->shape.at(i); }
  size_t rank() const { return impl_->shape.size(); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0);
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  double item() const;  // scalar tensors only

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend class Tape;
  friend Tensor make_tensor(Shape, std::vector<double>, bool);
};

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);

struct TapeNode {
  std::string op;
  std::shared_ptr<TensorImpl> output;
  std::function<void()> backward;  // reads output->grad, accumulates into inputs
};

// Ordered record of executed primitives. Reverse record order is a valid
// topological order, so backward() is a single reverse sweep.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. root must be
  // scalar-shaped and the tape nonempty.
  void backward(const Tensor& root);

  static Tape* active();

private:
  std::vector<TapeNode> nodes_;
  friend class TapeScope;
};

// RAII activation of a tape; ops record onto the innermost active tape.
class TapeScope {
public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;

private:
  Tape* prev_;
};

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor pow(const Tensor& a, double exponent);
Tensor digamma(const Tensor& a);
Tensor lgamma(const Tensor& a);

Tensor sum(const Tensor& a);               // -> scalar
Tensor sum(const Tensor& a, size_t axis);  // removes the axis
Tensor mean(const Tensor& a);              // -> scalar

Tensor matmul(const Tensor& a, const Tensor& b);  // (m,k) x (k,n)

// NCHW convolution with same padding, odd kernel. stride in {1, 2}.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, size_t stride = 1);

// 3x3 max pool, stride 1, same padding, NCHW.
Tensor max_pool3(const Tensor& input);

// Inverted dropout: train mode zeroes with probability p and scales kept
// values by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& a, double p, bool train, Rng& rng);

// Picks elements by flat index into a rank-1 tensor.
Tensor gather(const Tensor& a, const std::vector<size_t>& indices);

// Contiguous channel slice of an NCHW tensor.
Tensor slice_channels(const Tensor& a, size_t c0, size_t c1);

Tensor reshape(const Tensor& a, const Shape& shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator+(double a, const Tensor& b) { return add(b, a); }
inline Tensor operator-(const Tensor& a, double b) { return add(a, -b); }
inline Tensor operator-(double a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- verification harness -------------------------------------------------

// Compares the analytic gradient of a scalar-valued function against central
// finite differences, coordinate by coordinate. Returns the max over
// coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
// step is scaled per coordinate by max(1, |x_i|).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double step = 1e-5);

}  // namespace evcn
