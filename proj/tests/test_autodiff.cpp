#include <cmath>
#include <random>

#include "coforge/autodiff.hpp"
#include "coforge/error.hpp"
#include "coforge/quant.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace coforge;
using namespace coforge::ad;
using doctest::Approx;

TEST_SUITE("autodiff") {

TEST_CASE("forward values") {
  Tape t;
  const auto a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const auto eye = t.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const auto prod = matmul(a, eye).value().data;
  CHECK(prod == std::vector<double>{1, 2, 3, 4});
  const auto s = softmax(t.constant(Tensor::vector({0, 0, 0})));
  for (double v : s.value().data) CHECK(v == Approx(1.0 / 3));
  const std::vector<int> labels{2};
  const auto ce = cross_entropy(t.constant(Tensor::matrix(1, 4, {0.7, 0.7, 0.7, 0.7})), labels);
  CHECK(ce.value().item() == Approx(std::log(4.0)));
  CHECK(transpose(t.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}))).value().data ==
        std::vector<double>{1, 4, 2, 5, 3, 6});
}

TEST_CASE("square at three") {
  Tape t;
  const auto x = t.leaf(Tensor::scalar(3.0));
  t.backward(mul(x, x));
  CHECK(x.grad().item() == Approx(6.0));
}

TEST_CASE("cross entropy gradient is softmax minus one-hot") {
  Tape t;
  const std::vector<double> z{0.2, -1.0, 0.5, 2.0, 0.0, 0.3};
  const auto logits = t.leaf(Tensor::matrix(2, 3, z));
  const std::vector<int> labels{1, 2};
  t.backward(cross_entropy(logits, labels));
  for (int r = 0; r < 2; ++r) {
    double den = 0.0;
    for (int c = 0; c < 3; ++c) den += std::exp(z[r * 3 + c]);
    for (int c = 0; c < 3; ++c) {
      const double expect = (std::exp(z[r * 3 + c]) / den - (c == labels[r])) / 2.0;
      CHECK(logits.grad().data[r * 3 + c] == Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("finite differences per op") {
  using Build = std::function<Var(Tape&, const Var&)>;
  std::mt19937_64 g(11);
  const std::vector<int> labels{0, 2, 1};
  const std::vector<double> noise{0.1, -0.4, 0.2};
  const std::vector<std::pair<const char*, Build>> ops = {
      {"matmul", [](Tape& t, const Var& x) {
         return sum(matmul(x, t.constant(Tensor::matrix(3, 2, {0.5, -1, 2, 0.3, -0.7, 1.1}))));
       }},
      {"add", [](Tape& t, const Var& x) { return sum(mul(add(x, t.constant(Tensor::vector({1, 2, 3}))), x)); }},
      {"sub", [](Tape&, const Var& x) { return sum(mul(sub(x, scale(x, 0.3)), x)); }},
      {"exp", [](Tape&, const Var& x) { return sum(exp(x)); }},
      {"log", [](Tape&, const Var& x) { return sum(log(add_scalar(mul(x, x), 1.0))); }},
      {"tanh", [](Tape&, const Var& x) { return sum(tanh(x)); }},
      {"softmax", [](Tape& t, const Var& x) {
         return sum(mul(softmax(x), t.constant(Tensor::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}))));
       }},
      {"mean", [](Tape&, const Var& x) { return mean(mul(x, x)); }},
      {"cross_entropy", [&labels](Tape&, const Var& x) { return cross_entropy(x, labels); }},
      {"index", [](Tape&, const Var& x) { return mul_scalar(index(x, 4), index(x, 1)); }},
      {"transpose", [](Tape& t, const Var& x) {
         return sum(mul(transpose(x), t.constant(Tensor::matrix(3, 3, {1, 0, 2, 0, 3, 0, 4, 0, 5}))));
       }},
  };
  for (int seed = 0; seed < 20; ++seed) {
    const auto x0 = oracle::gaussian(g, 9);
    for (const auto& [name, build] : ops) {
      CAPTURE(name);
      Tape t;
      const auto x = t.leaf(Tensor::matrix(3, 3, x0));
      t.backward(build(t, x));
      const auto f = [&](const std::vector<double>& v) {
        Tape u;
        return build(u, u.leaf(Tensor::matrix(3, 3, v))).value().item();
      };
      CHECK(oracle::relative_error(x.grad().data, oracle::numeric_grad(f, x0, 1e-5)) < 1e-4);
    }
    // relu away from its kink, gumbel softmax on positive theta
    std::vector<double> xr = x0;
    for (auto& v : xr) v += v >= 0 ? 0.1 : -0.1;
    Tape t;
    const auto x = t.leaf(Tensor::vector(xr));
    t.backward(sum(mul(relu(x), x)));
    const auto fr = [](const std::vector<double>& v) {
      double s = 0;
      for (double e : v) s += std::max(e, 0.0) * e;
      return s;
    };
    CHECK(oracle::relative_error(x.grad().data, oracle::numeric_grad(fr, xr, 1e-6)) < 1e-4);

    std::vector<double> th{0.5 + std::abs(x0[0]), 0.5 + std::abs(x0[1]), 0.5 + std::abs(x0[2])};
    const auto gs = [&noise](Tape& u, const Var& v) {
      return sum(mul(gumbel_softmax(v, noise, 0.7), u.constant(Tensor::vector({1, -2, 3}))));
    };
    Tape tg;
    const auto tv = tg.leaf(Tensor::vector(th));
    tg.backward(gs(tg, tv));
    const auto fg = [&](const std::vector<double>& v) {
      Tape u;
      return gs(u, u.leaf(Tensor::vector(v))).value().item();
    };
    CHECK(oracle::relative_error(tv.grad().data, oracle::numeric_grad(fg, th, 1e-6)) < 1e-4);
  }
}

TEST_CASE("errors") {
  Tape t;
  const auto a = t.leaf(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
  const auto b = t.leaf(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
  try {
    matmul(a, b);
    FAIL("expected an error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
  }
  CHECK_THROWS_AS(t.backward(a), ShapeError);
  const auto c = t.constant(Tensor::scalar(2.0));
  CHECK_THROWS_AS(t.backward(mul(c, c)), InputError);
  const auto loss = sum(mul(a, b));
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), InputError);
  Tape other;
  CHECK_THROWS_AS(add(a, other.leaf(Tensor::scalar(1.0))), InputError);
}

TEST_CASE("straight-through estimator") {
  const std::vector<double> w{0.5, -1.5, 1.0, 0.1};
  Tape t;
  const auto x = t.leaf(Tensor::vector(w));
  const auto q = ste_quantize(x, [](std::span<const double> v) { return quant::fake_quantize(v, 2); });
  CHECK(q.value().data == quant::fake_quantize(w, 2));
  t.backward(sum(q));
  for (double gv : x.grad().data) CHECK(gv == 1.0);

  // Scalar regression through a binary quantizer: y = q(w) * x with target -2x.
  double wv = 0.8;
  const auto loss_at = [](double w_) {
    const double q_ = w_ >= 0 ? std::abs(w_) : -std::abs(w_);
    return (q_ + 2.0) * (q_ + 2.0);
  };
  const double l0 = loss_at(wv);
  for (int step = 0; step < 200; ++step) {
    Tape u;
    const auto p = u.leaf(Tensor::vector({wv}));
    const auto qp = ste_quantize(p, [](std::span<const double> v) { return quant::fake_quantize(v, 1); });
    const auto r = add_scalar(qp, 2.0);
    u.backward(sum(mul(r, r)));
    wv -= 0.05 * p.grad().data[0];
  }
  CHECK(wv < 0.0);
  CHECK(loss_at(wv) <= l0 / 100);
}

}  // TEST_SUITE
