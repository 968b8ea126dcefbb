#include "evcn/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "evcn/special_math.hpp"

namespace evcn {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t e : s) {
    if (e == 0) throw ShapeError("tensor shape has zero extent " + shape_str(s));
    n *= e;
  }
  return n;
}

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return make_tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return make_tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
  return make_tensor(shape, std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return make_tensor({}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a scalar tensor, got shape " + shape_str(shape()));
  return impl_->data[0];
}

// ---- tape -----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) throw ShapeError("backward: root must be scalar-shaped, got " + shape_str(root.shape()));
  if (nodes_.empty()) throw ShapeError("backward: tape is empty");
  root.impl()->ensure_grad();
  root.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no gradient reached this node
    it->backward();
  }
}

// ---- op helpers -----------------------------------------------------------

namespace {

void check_finite_output(const char* op, const std::vector<double>& out,
                         std::initializer_list<const TensorImpl*> inputs) {
  for (double v : out) {
    if (!std::isfinite(v)) {
      for (const TensorImpl* in : inputs)
        for (double w : in->data)
          if (!std::isfinite(w)) throw NumericError(std::string(op) + ": non-finite input value");
      throw NumericError(std::string(op) + ": non-finite output with finite inputs");
    }
  }
}

bool want_record(std::initializer_list<const TensorImpl*> inputs) {
  bool rg = false;
  for (const TensorImpl* in : inputs) rg = rg || in->requires_grad;
  return rg;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Elementwise binary op with per-element partial derivatives.
template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  require_same_shape(name, a, b);
  auto ai = a.impl();
  auto bi = b.impl();
  std::vector<double> out(ai->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ai->data[i], bi->data[i]);
  check_finite_output(name, out, {ai.get(), bi.get()});
  bool rg = want_record({ai.get(), bi.get()});
  Tensor result = make_tensor(ai->shape, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({name, oi, [ai, bi, oi, bwd]() {
                              for (size_t i = 0; i < oi->grad.size(); ++i) {
                                double da, db;
                                bwd(ai->data[i], bi->data[i], &da, &db);
                                double g = oi->grad[i];
                                if (ai->requires_grad) {
                                  ai->ensure_grad();
                                  ai->grad[i] += g * da;
                                }
                                if (bi->requires_grad) {
                                  bi->ensure_grad();
                                  bi->grad[i] += g * db;
                                }
                              }
                            }});
  }
  return result;
}

// Elementwise unary op; derivative may use both input and output values.
template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd bwd) {
  auto ai = a.impl();
  std::vector<double> out(ai->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(ai->data[i]);
  check_finite_output(name, out, {ai.get()});
  bool rg = ai->requires_grad;
  Tensor result = make_tensor(ai->shape, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({name, oi, [ai, oi, bwd]() {
                              ai->ensure_grad();
                              for (size_t i = 0; i < oi->grad.size(); ++i)
                                ai->grad[i] += oi->grad[i] * bwd(ai->data[i], oi->data[i]);
                            }});
  }
  return result;
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double, double* da, double* db) { *da = 1.0; *db = 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double, double* da, double* db) { *da = 1.0; *db = -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", a, b, [](double x, double y) { return x * y; },
                   [](double x, double y, double* da, double* db) { *da = y; *db = x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op("div", a, b, [](double x, double y) { return x / y; },
                   [](double x, double y, double* da, double* db) {
                     *da = 1.0 / y;
                     *db = -x / (y * y);
                   });
}

Tensor add(const Tensor& a, double b) {
  return unary_op("add_scalar", a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor sub(double a, const Tensor& b) {
  return unary_op("rsub_scalar", b, [a](double x) { return a - x; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, double b) {
  return unary_op("mul_scalar", a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}

Tensor neg(const Tensor& a) {
  return unary_op("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& a) {
  // subgradient 0 at the kink
  return unary_op("abs", a, [](double x) { return std::fabs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& a) {
  return unary_op("sqrt", a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor log(const Tensor& a) {
  return unary_op("log", a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                  [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& a) {
  return unary_op("tanh", a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary_op("softplus", a, [](double x) { return evcn::softplus(x); },
                  [](double x, double) { return logistic(x); });
}

Tensor clamp_min(const Tensor& a, double floor) {
  // zero gradient below the floor
  return unary_op("clamp_min", a, [floor](double x) { return x < floor ? floor : x; },
                  [floor](double x, double) { return x < floor ? 0.0 : 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  return unary_op("clamp", a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Tensor pow(const Tensor& a, double exponent) {
  return unary_op("pow", a, [exponent](double x) { return std::pow(x, exponent); },
                  [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Tensor digamma(const Tensor& a) {
  return unary_op("digamma", a, [](double x) { return evcn::digamma(x); },
                  [](double x, double) { return trigamma(x); });
}

Tensor lgamma(const Tensor& a) {
  return unary_op("lgamma", a, [](double x) { return log_gamma(x); },
                  [](double x, double) { return evcn::digamma(x); });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  auto ai = a.impl();
  double acc = 0.0;
  for (double v : ai->data) acc += v;
  std::vector<double> out{acc};
  check_finite_output("sum", out, {ai.get()});
  bool rg = ai->requires_grad;
  Tensor result = make_tensor({}, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"sum", oi, [ai, oi]() {
                              ai->ensure_grad();
                              double g = oi->grad[0];
                              for (double& gv : ai->grad) gv += g;
                            }});
  }
  return result;
}

Tensor sum(const Tensor& a, size_t axis) {
  auto ai = a.impl();
  if (axis >= ai->shape.size()) throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for shape " + shape_str(ai->shape));
  Shape out_shape;
  size_t outer = 1, axis_n = ai->shape[axis], inner = 1;
  for (size_t i = 0; i < ai->shape.size(); ++i) {
    if (i < axis) outer *= ai->shape[i];
    else if (i > axis) inner *= ai->shape[i];
    if (i != axis) out_shape.push_back(ai->shape[i]);
  }
  std::vector<double> out(outer * inner, 0.0);
  for (size_t o = 0; o < outer; ++o)
    for (size_t k = 0; k < axis_n; ++k)
      for (size_t i = 0; i < inner; ++i)
        out[o * inner + i] += ai->data[(o * axis_n + k) * inner + i];
  check_finite_output("sum_axis", out, {ai.get()});
  bool rg = ai->requires_grad;
  Tensor result = make_tensor(out_shape, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"sum_axis", oi, [ai, oi, outer, axis_n, inner]() {
                              ai->ensure_grad();
                              for (size_t o = 0; o < outer; ++o)
                                for (size_t k = 0; k < axis_n; ++k)
                                  for (size_t i = 0; i < inner; ++i)
                                    ai->grad[(o * axis_n + k) * inner + i] += oi->grad[o * inner + i];
                            }});
  }
  return result;
}

Tensor mean(const Tensor& a) {
  return mul(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ---- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto ai = a.impl();
  auto bi = b.impl();
  if (ai->shape.size() != 2 || bi->shape.size() != 2 || ai->shape[1] != bi->shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(ai->shape) + " x " + shape_str(bi->shape));
  const size_t m = ai->shape[0], k = ai->shape[1], n = bi->shape[1];
  std::vector<double> out(m * n, 0.0);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n, (int)k, 1.0, ai->data.data(),
              (int)k, bi->data.data(), (int)n, 0.0, out.data(), (int)n);
  check_finite_output("matmul", out, {ai.get(), bi.get()});
  bool rg = want_record({ai.get(), bi.get()});
  Tensor result = make_tensor({m, n}, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"matmul", oi, [ai, bi, oi, m, k, n]() {
                              if (ai->requires_grad) {
                                ai->ensure_grad();
                                // dA += dC * B^T
                                cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m, (int)k, (int)n, 1.0,
                                            oi->grad.data(), (int)n, bi->data.data(), (int)n, 1.0,
                                            ai->grad.data(), (int)k);
                              }
                              if (bi->requires_grad) {
                                bi->ensure_grad();
                                // dB += A^T * dC
                                cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)k, (int)n, (int)m, 1.0,
                                            ai->data.data(), (int)k, oi->grad.data(), (int)n, 1.0,
                                            bi->grad.data(), (int)n);
                              }
                            }});
  }
  return result;
}

// ---- conv2d ---------------------------------------------------------------

namespace {

struct ConvDims {
  size_t n, ci, h, w, co, kh, kw, oh, ow, pad, stride;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weight, size_t stride) {
  if (input.rank() != 4 || weight.rank() != 4)
    throw ShapeError("conv2d: expected 4-D input and weight, got " + shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  ConvDims d;
  d.n = input.dim(0);
  d.ci = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.co = weight.dim(0);
  d.kh = weight.dim(2);
  d.kw = weight.dim(3);
  d.stride = stride;
  if (weight.dim(1) != d.ci)
    throw ShapeError("conv2d: input channels " + std::to_string(d.ci) + " do not match weight " + shape_str(weight.shape()));
  if (d.kh % 2 == 0 || d.kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  d.pad = (d.kh - 1) / 2;
  d.oh = (d.h + 2 * d.pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * d.pad - d.kw) / stride + 1;
  return d;
}

// col is (ci*kh*kw) x (oh*ow) row-major for one image.
void im2col(const double* img, const ConvDims& d, double* col) {
  const size_t ohw = d.oh * d.ow;
  for (size_t c = 0; c < d.ci; ++c) {
    for (size_t ky = 0; ky < d.kh; ++ky) {
      for (size_t kx = 0; kx < d.kw; ++kx) {
        double* dst = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
        for (size_t oy = 0; oy < d.oh; ++oy) {
          long iy = (long)(oy * d.stride + ky) - (long)d.pad;
          if (iy < 0 || iy >= (long)d.h) {
            for (size_t ox = 0; ox < d.ow; ++ox) dst[oy * d.ow + ox] = 0.0;
            continue;
          }
          const double* src_row = img + (c * d.h + (size_t)iy) * d.w;
          for (size_t ox = 0; ox < d.ow; ++ox) {
            long ix = (long)(ox * d.stride + kx) - (long)d.pad;
            dst[oy * d.ow + ox] = (ix < 0 || ix >= (long)d.w) ? 0.0 : src_row[ix];
          }
        }
      }
    }
  }
}

void col2im_accumulate(const double* col, const ConvDims& d, double* img_grad) {
  const size_t ohw = d.oh * d.ow;
  for (size_t c = 0; c < d.ci; ++c) {
    for (size_t ky = 0; ky < d.kh; ++ky) {
      for (size_t kx = 0; kx < d.kw; ++kx) {
        const double* src = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
        for (size_t oy = 0; oy < d.oh; ++oy) {
          long iy = (long)(oy * d.stride + ky) - (long)d.pad;
          if (iy < 0 || iy >= (long)d.h) continue;
          double* dst_row = img_grad + (c * d.h + (size_t)iy) * d.w;
          for (size_t ox = 0; ox < d.ow; ++ox) {
            long ix = (long)(ox * d.stride + kx) - (long)d.pad;
            if (ix >= 0 && ix < (long)d.w) dst_row[ix] += src[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, size_t stride) {
  ConvDims d = conv_dims(input, weight, stride);
  auto ii = input.impl();
  auto wi = weight.impl();
  auto bi = bias.impl();
  if (bi->shape != Shape{d.co})
    throw ShapeError("conv2d: bias shape " + shape_str(bi->shape) + " does not match " + std::to_string(d.co) + " output channels");

  const size_t K = d.ci * d.kh * d.kw;
  const size_t ohw = d.oh * d.ow;
  const bool pointwise = (d.kh == 1 && d.kw == 1 && d.stride == 1);
  std::vector<double> out(d.n * d.co * ohw);
  std::vector<double> col;
  if (!pointwise) col.resize(K * ohw);
  for (size_t n = 0; n < d.n; ++n) {
    const double* img = ii->data.data() + n * d.ci * d.h * d.w;
    const double* colp = img;
    if (!pointwise) {
      im2col(img, d, col.data());
      colp = col.data();
    }
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)d.co, (int)ohw, (int)K, 1.0,
                wi->data.data(), (int)K, colp, (int)ohw, 0.0, out.data() + n * d.co * ohw, (int)ohw);
    for (size_t co = 0; co < d.co; ++co) {
      double b = bi->data[co];
      double* row = out.data() + (n * d.co + co) * ohw;
      for (size_t i = 0; i < ohw; ++i) row[i] += b;
    }
  }
  check_finite_output("conv2d", out, {ii.get(), wi.get(), bi.get()});
  bool rg = want_record({ii.get(), wi.get(), bi.get()});
  Tensor result = make_tensor({d.n, d.co, d.oh, d.ow}, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"conv2d", oi, [ii, wi, bi, oi, d, K, ohw, pointwise]() {
      std::vector<double> col, col_grad;
      if (!pointwise) col.resize(K * ohw);
      if (ii->requires_grad) {
        ii->ensure_grad();
        if (!pointwise) col_grad.resize(K * ohw);
      }
      if (wi->requires_grad) wi->ensure_grad();
      if (bi->requires_grad) bi->ensure_grad();
      for (size_t n = 0; n < d.n; ++n) {
        const double* g_out = oi->grad.data() + n * d.co * ohw;
        const double* img = ii->data.data() + n * d.ci * d.h * d.w;
        const double* colp = img;
        if (!pointwise) {
          im2col(img, d, col.data());
          colp = col.data();
        }
        if (wi->requires_grad) {
          // dW += dOut * col^T
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)d.co, (int)K, (int)ohw, 1.0,
                      g_out, (int)ohw, colp, (int)ohw, 1.0, wi->grad.data(), (int)K);
        }
        if (bi->requires_grad) {
          for (size_t co = 0; co < d.co; ++co) {
            double acc = 0.0;
            const double* row = g_out + co * ohw;
            for (size_t i = 0; i < ohw; ++i) acc += row[i];
            bi->grad[co] += acc;
          }
        }
        if (ii->requires_grad) {
          double* img_grad = ii->grad.data() + n * d.ci * d.h * d.w;
          if (pointwise) {
            // dIn += W^T * dOut, accumulated in place
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)K, (int)ohw, (int)d.co, 1.0,
                        wi->data.data(), (int)K, g_out, (int)ohw, 1.0, img_grad, (int)ohw);
          } else {
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)K, (int)ohw, (int)d.co, 1.0,
                        wi->data.data(), (int)K, g_out, (int)ohw, 0.0, col_grad.data(), (int)ohw);
            col2im_accumulate(col_grad.data(), d, img_grad);
          }
        }
      }
    }});
  }
  return result;
}

// ---- max pool -------------------------------------------------------------

Tensor max_pool3(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("max_pool3: expected 4-D input, got " + shape_str(input.shape()));
  auto ii = input.impl();
  const size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  std::vector<double> out(ii->numel());
  auto argmax = std::make_shared<std::vector<size_t>>(ii->numel());
  for (size_t nc = 0; nc < n * c; ++nc) {
    const double* plane = ii->data.data() + nc * h * w;
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) {
        double best = -1e300;
        size_t best_idx = 0;
        for (long dy = -1; dy <= 1; ++dy) {
          for (long dx = -1; dx <= 1; ++dx) {
            long yy = (long)y + dy, xx = (long)x + dx;
            if (yy < 0 || yy >= (long)h || xx < 0 || xx >= (long)w) continue;
            size_t idx = (size_t)yy * w + (size_t)xx;
            if (plane[idx] > best) {
              best = plane[idx];
              best_idx = idx;
            }
          }
        }
        out[nc * h * w + y * w + x] = best;
        (*argmax)[nc * h * w + y * w + x] = nc * h * w + best_idx;
      }
    }
  }
  check_finite_output("max_pool3", out, {ii.get()});
  bool rg = ii->requires_grad;
  Tensor result = make_tensor(ii->shape, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"max_pool3", oi, [ii, oi, argmax]() {
                              ii->ensure_grad();
                              for (size_t i = 0; i < oi->grad.size(); ++i)
                                ii->grad[(*argmax)[i]] += oi->grad[i];
                            }});
  }
  return result;
}

// ---- dropout --------------------------------------------------------------

Tensor dropout(const Tensor& a, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ShapeError("dropout: p must be in [0,1), got " + std::to_string(p));
  auto ai = a.impl();
  if (!train || p == 0.0) {
    // identity in eval mode; still a fresh node so the caller never aliases
    return unary_op("dropout_eval", a, [](double x) { return x; }, [](double, double) { return 1.0; });
  }
  auto mask = std::make_shared<std::vector<double>>(ai->numel());
  const double scale = 1.0 / (1.0 - p);
  for (double& m : *mask) m = (rng.uniform() < p) ? 0.0 : scale;
  std::vector<double> out(ai->numel());
  for (size_t i = 0; i < out.size(); ++i) out[i] = ai->data[i] * (*mask)[i];
  check_finite_output("dropout", out, {ai.get()});
  bool rg = ai->requires_grad;
  Tensor result = make_tensor(ai->shape, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"dropout", oi, [ai, oi, mask]() {
                              ai->ensure_grad();
                              for (size_t i = 0; i < oi->grad.size(); ++i)
                                ai->grad[i] += oi->grad[i] * (*mask)[i];
                            }});
  }
  return result;
}

// ---- gather / slicing / reshape ------------------------------------------

Tensor gather(const Tensor& a, const std::vector<size_t>& indices) {
  if (indices.empty()) throw ShapeError("gather: empty index list");
  auto ai = a.impl();
  std::vector<double> out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= ai->numel())
      throw ShapeError("gather: index " + std::to_string(indices[i]) + " out of range for " + std::to_string(ai->numel()) + " elements");
    out[i] = ai->data[indices[i]];
  }
  bool rg = ai->requires_grad;
  Tensor result = make_tensor({indices.size()}, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    auto idx = std::make_shared<std::vector<size_t>>(indices);
    Tape::active()->record({"gather", oi, [ai, oi, idx]() {
                              ai->ensure_grad();
                              for (size_t i = 0; i < oi->grad.size(); ++i)
                                ai->grad[(*idx)[i]] += oi->grad[i];
                            }});
  }
  return result;
}

Tensor slice_channels(const Tensor& a, size_t c0, size_t c1) {
  if (a.rank() != 4) throw ShapeError("slice_channels: expected 4-D input, got " + shape_str(a.shape()));
  auto ai = a.impl();
  const size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  if (c0 >= c1 || c1 > c) throw ShapeError("slice_channels: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ") for " + std::to_string(c) + " channels");
  const size_t cs = c1 - c0;
  std::vector<double> out(n * cs * hw);
  for (size_t ni = 0; ni < n; ++ni)
    for (size_t ci = 0; ci < cs; ++ci)
      std::copy_n(ai->data.data() + ((ni * c + c0 + ci) * hw), hw, out.data() + (ni * cs + ci) * hw);
  bool rg = ai->requires_grad;
  Tensor result = make_tensor({n, cs, a.dim(2), a.dim(3)}, std::move(out), rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"slice_channels", oi, [ai, oi, n, c, c0, cs, hw]() {
                              ai->ensure_grad();
                              for (size_t ni = 0; ni < n; ++ni)
                                for (size_t ci = 0; ci < cs; ++ci) {
                                  const double* src = oi->grad.data() + (ni * cs + ci) * hw;
                                  double* dst = ai->grad.data() + (ni * c + c0 + ci) * hw;
                                  for (size_t i = 0; i < hw; ++i) dst[i] += src[i];
                                }
                            }});
  }
  return result;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  auto ai = a.impl();
  if (shape_numel(shape) != ai->numel())
    throw ShapeError("reshape: cannot reshape " + shape_str(ai->shape) + " to " + shape_str(shape));
  bool rg = ai->requires_grad;
  Tensor result = make_tensor(shape, ai->data, rg);
  if (rg && Tape::active()) {
    auto oi = result.impl();
    Tape::active()->record({"reshape", oi, [ai, oi]() {
                              ai->ensure_grad();
                              for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
                            }});
  }
  return result;
}

// ---- finite differences ---------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                         double step) {
  Tensor x = make_tensor(point.shape(), point.data(), true);
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(x);
    if (y.numel() != 1) throw ShapeError("finite_diff_check: f must be scalar-valued");
    tape.backward(y);
    analytic = x.grad();
  }

  auto eval_at = [&](const std::vector<double>& d, size_t coord) {
    Tensor p = make_tensor(point.shape(), d, false);
    Tensor y;
    try {
      y = f(p);
    } catch (const NumericError& e) {
      throw NumericError("finite_diff_check: f non-finite at perturbed coordinate " + std::to_string(coord) + ": " + e.what());
    }
    double v = y.item();
    if (!std::isfinite(v))
      throw NumericError("finite_diff_check: f non-finite at perturbed coordinate " + std::to_string(coord));
    return v;
  };

  double max_rel = 0.0;
  std::vector<double> d = point.data();
  for (size_t i = 0; i < d.size(); ++i) {
    const double h = step * std::max(1.0, std::fabs(d[i]));
    const double saved = d[i];
    d[i] = saved + h;
    double fp = eval_at(d, i);
    d[i] = saved - h;
    double fm = eval_at(d, i);
    d[i] = saved;
    double numeric = (fp - fm) / (2.0 * h);
    double a = analytic[i];
    double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace evcn
