#include "coforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coforge/error.hpp"

namespace coforge::ad {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (product(shape) != data.size())
    throw ShapeError("tensor of shape " + shape_string(shape) + " cannot hold " + std::to_string(data.size()) +
                     " values");
}

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(std::vector<std::size_t> shape, double v) {
  const auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, v));
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape));
  return data[0];
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tape& Var::tape() const {
  if (!tape_) throw InputError("use of an unbound variable");
  return *tape_;
}
const Tensor& Var::value() const { return tape().value(id_); }
const Tensor& Var::grad() const { return tape().grad(id_); }
bool Var::requires_grad() const { return tape().requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, std::move(inputs), needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw InputError("backward: loss belongs to a different tape");
  if (backward_done_) throw InputError("backward called twice on one tape; record a fresh forward pass first");
  const auto& lv = nodes_[loss.id()].value;
  if (!lv.is_scalar()) throw ShapeError("backward needs a scalar loss, got shape " + shape_string(lv.shape));
  if (!nodes_[loss.id()].requires_grad)
    throw InputError("backward: loss does not depend on any variable that requires a gradient");
  backward_done_ = true;
  for (auto& n : nodes_)
    if (n.requires_grad) n.grad = Tensor::zeros(n.value.shape);
  nodes_[loss.id()].grad.data[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

const Tensor& Tape::grad(std::size_t id) const {
  const auto& n = nodes_[id];
  if (!n.requires_grad) throw InputError("gradient requested for a variable that does not require one");
  if (!backward_done_) throw InputError("gradient requested before backward()");
  return n.grad;
}

namespace {

Tape& common_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw InputError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
}

void accumulate(Tape& t, std::size_t id, std::size_t i, double g) {
  if (t.requires_grad(id)) t.grad_buffer(id)[i] += g;
}

// Elementwise unary op given f and f'(x, y).
template <typename F, typename D>
Var unary(const Var& a, F f, D df) {
  auto& t = a.tape();
  const auto& x = a.value();
  Tensor y(x.shape, std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = f(x.data[i]);
  const auto ia = a.id();
  return t.record(std::move(y), {ia}, [ia, df](Tape& tp, std::size_t self) {
    const auto& xv = tp.value(ia).data;
    const auto& yv = tp.value(self).data;
    const auto& gy = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gy[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  auto& t = common_tape(a, b, "matmul");
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
    throw ShapeError("matmul: shape mismatch " + shape_string(A.shape) + " x " + shape_string(B.shape));
  const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
  Tensor C = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.data[i * k + p];
      for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] += av * B.data[p * n + j];
    }
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(C), {ia, ib}, [ia, ib, m, k, n](Tape& tp, std::size_t self) {
    const auto& gc = tp.grad_buffer(self);
    if (tp.requires_grad(ia)) {
      const auto& Bv = tp.value(ib).data;
      auto& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += gc[i * n + j] * Bv[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (tp.requires_grad(ib)) {
      const auto& Av = tp.value(ia).data;
      auto& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = Av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * gc[i * n + j];
        }
    }
  });
}

Var transpose(const Var& a) {
  auto& t = a.tape();
  const auto& A = a.value();
  if (A.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_string(A.shape));
  const std::size_t m = A.shape[0], n = A.shape[1];
  Tensor T = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) T.data[j * m + i] = A.data[i * n + j];
  const auto ia = a.id();
  return t.record(std::move(T), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(const Var& a, const Var& b) {
  auto& t = common_tape(a, b, "add");
  const auto& A = a.value();
  const auto& B = b.value();
  const auto ia = a.id(), ib = b.id();
  if (A.shape == B.shape) {
    Tensor C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    return t.record(std::move(C), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
      const auto& g = tp.grad_buffer(self);
      for (std::size_t i = 0; i < g.size(); ++i) {
        accumulate(tp, ia, i, g[i]);
        accumulate(tp, ib, i, g[i]);
      }
    });
  }
  const bool bias_row = A.rank() == 2 && B.size() == A.shape[1] &&
                        (B.rank() == 1 || (B.rank() == 2 && B.shape[0] == 1));
  if (!bias_row) throw ShapeError("add: shape mismatch " + shape_string(A.shape) + " + " + shape_string(B.shape));
  const std::size_t m = A.shape[0], n = A.shape[1];
  Tensor C = A;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C.data[i * n + j] += B.data[j];
  return t.record(std::move(C), {ia, ib}, [ia, ib, m, n](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        accumulate(tp, ia, i * n + j, g[i * n + j]);
        accumulate(tp, ib, j, g[i * n + j]);
      }
  });
}

Var sub(const Var& a, const Var& b) {
  auto& t = common_tape(a, b, "sub");
  const auto& A = a.value();
  const auto& B = b.value();
  require_same_shape(A, B, "sub");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(C), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      accumulate(tp, ia, i, g[i]);
      accumulate(tp, ib, i, -g[i]);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  auto& t = common_tape(a, b, "mul");
  const auto& A = a.value();
  const auto& B = b.value();
  require_same_shape(A, B, "mul");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(C), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    const auto& av = tp.value(ia).data;
    const auto& bv = tp.value(ib).data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      accumulate(tp, ia, i, g[i] * bv[i]);
      accumulate(tp, ib, i, g[i] * av[i]);
    }
  });
}

Var scale(const Var& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, const Var& s) {
  auto& t = common_tape(a, s, "mul_scalar");
  const auto& A = a.value();
  if (!s.value().is_scalar())
    throw ShapeError("mul_scalar: factor must hold one value, got shape " + shape_string(s.value().shape));
  const double sv = s.value().item();
  Tensor C = A;
  for (auto& v : C.data) v *= sv;
  const auto ia = a.id(), is = s.id();
  return t.record(std::move(C), {ia, is}, [ia, is](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    const auto& av = tp.value(ia).data;
    const double svv = tp.value(is).data[0];
    double gs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      accumulate(tp, ia, i, g[i] * svv);
      gs += g[i] * av[i];
    }
    accumulate(tp, is, 0, gs);
  });
}

Var index(const Var& a, std::size_t i) {
  auto& t = a.tape();
  const auto& A = a.value();
  if (i >= A.size())
    throw ShapeError("index " + std::to_string(i) + " outside tensor of shape " + shape_string(A.shape));
  const auto ia = a.id();
  return t.record(Tensor::scalar(A.data[i]), {ia}, [ia, i](Tape& tp, std::size_t self) {
    tp.grad_buffer(ia)[i] += tp.grad_buffer(self)[0];
  });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (double v : a.value().data)
    if (!(v > 0.0)) throw InputError("log of a non-positive value");
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

namespace {

void softmax_rows(const std::vector<double>& z, std::size_t rows, std::size_t cols, std::vector<double>& y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * cols;
    double* yr = y.data() + r * cols;
    const double mx = *std::max_element(zr, zr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (yr[c] = std::exp(zr[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= s;
  }
}

// dz = y * (dy - <dy, y>) per row.
void softmax_backward(const std::vector<double>& y, const std::vector<double>& gy, std::size_t rows,
                      std::size_t cols, std::vector<double>& gz, double factor) {
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < cols; ++c) dot += gy[r * cols + c] * y[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) gz[r * cols + c] = factor * y[r * cols + c] * (gy[r * cols + c] - dot);
  }
}

}  // namespace

Var softmax(const Var& a) {
  auto& t = a.tape();
  const auto& A = a.value();
  if (A.rank() < 1 || A.rank() > 2) throw ShapeError("softmax: expected rank 1 or 2, got " + shape_string(A.shape));
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor Y(A.shape, std::vector<double>(A.size()));
  softmax_rows(A.data, rows, cols, Y.data);
  const auto ia = a.id();
  return t.record(std::move(Y), {ia}, [ia, rows, cols](Tape& tp, std::size_t self) {
    std::vector<double> gz(rows * cols);
    softmax_backward(tp.value(self).data, tp.grad_buffer(self), rows, cols, gz, 1.0);
    auto& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < gz.size(); ++i) ga[i] += gz[i];
  });
}

Var sum(const Var& a) {
  auto& t = a.tape();
  double s = 0.0;
  for (double v : a.value().data) s += v;
  const auto ia = a.id();
  return t.record(Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad_buffer(self)[0];
    for (auto& v : tp.grad_buffer(ia)) v += g;
  });
}

Var mean(const Var& a) {
  const auto n = a.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  auto& t = logits.tape();
  const auto& Z = logits.value();
  if (Z.rank() != 2) throw ShapeError("cross_entropy: logits must be [batch, classes], got " + shape_string(Z.shape));
  const std::size_t rows = Z.shape[0], cols = Z.shape[1];
  if (labels.size() != rows)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                     " rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= cols)
      throw InputError("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(cols) + ")");
  std::vector<double> p(rows * cols);
  softmax_rows(Z.data, rows, cols, p);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = Z.data.data() + r * cols;
    const double mx = *std::max_element(zr, zr + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(zr[c] - mx);
    loss += mx + std::log(s) - zr[labels[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<int> lab(labels.begin(), labels.end());
  const auto iz = logits.id();
  return t.record(Tensor::scalar(loss), {iz},
                  [iz, rows, cols, p = std::move(p), lab = std::move(lab)](Tape& tp, std::size_t self) {
                    const double g = tp.grad_buffer(self)[0] / static_cast<double>(rows);
                    auto& gz = tp.grad_buffer(iz);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c)
                        gz[r * cols + c] += g * (p[r * cols + c] - (static_cast<int>(c) == lab[r] ? 1.0 : 0.0));
                  });
}

Var gumbel_softmax(const Var& theta, std::span<const double> noise, double tau) {
  auto& t = theta.tape();
  const auto& th = theta.value();
  if (th.rank() != 1) throw ShapeError("gumbel_softmax: theta must be 1-D, got " + shape_string(th.shape));
  if (noise.size() != th.size())
    throw ShapeError("gumbel_softmax: " + std::to_string(noise.size()) + " noise values for theta of shape " +
                     shape_string(th.shape));
  if (!(tau > 0.0)) throw InputError("gumbel_softmax: temperature must be positive");
  for (double v : th.data)
    if (!(v > 0.0)) throw InputError("gumbel_softmax: sampling parameters must be positive");
  const std::size_t n = th.size();
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = (std::log(th.data[i]) + noise[i]) / tau;
  Tensor Y = Tensor::zeros({n});
  softmax_rows(z, 1, n, Y.data);
  const auto it = theta.id();
  return t.record(std::move(Y), {it}, [it, n, tau](Tape& tp, std::size_t self) {
    std::vector<double> gz(n);
    softmax_backward(tp.value(self).data, tp.grad_buffer(self), 1, n, gz, 1.0 / tau);
    const auto& thv = tp.value(it).data;
    auto& gt = tp.grad_buffer(it);
    for (std::size_t i = 0; i < n; ++i) gt[i] += gz[i] / thv[i];
  });
}

Var ste_quantize(const Var& w, const Quantizer& quantizer) {
  auto& t = w.tape();
  const auto& W = w.value();
  auto q = quantizer(W.data);
  if (q.size() != W.size())
    throw ShapeError("ste_quantize: quantizer returned " + std::to_string(q.size()) + " values for " +
                     std::to_string(W.size()));
  const auto iw = w.id();
  return t.record(Tensor(W.shape, std::move(q)), {iw}, [iw](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_buffer(self);
    auto& gw = tp.grad_buffer(iw);
    for (std::size_t i = 0; i < g.size(); ++i) gw[i] += g[i];
  });
}

}  // namespace coforge::ad
