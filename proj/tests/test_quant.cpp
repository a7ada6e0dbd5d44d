#include <cmath>
#include <random>

#include "coforge/error.hpp"
#include "coforge/quant.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace coforge;
using namespace coforge::quant;
using doctest::Approx;

namespace {
ir::WeightVector wv(std::vector<double> v) { return {"w", std::move(v)}; }
std::vector<double> brute_levels_scaled(const std::vector<double>& w) {
  const double a = oracle::mean_abs(w);
  const auto l = oracle::brute_binary_levels(w, a);
  std::vector<double> out;
  for (int x : l) out.push_back(a * x);
  return out;
}
}  // namespace

TEST_SUITE("quant") {

TEST_CASE("binary hand examples") {
  const auto q = quantize_binary(wv({0.5, -1.5, 1.0}));
  CHECK(q.scale == Approx(1.0));
  CHECK(q.levels == std::vector<std::int32_t>{1, -1, 1});
  CHECK(q.reconstruct() == std::vector<double>{1.0, -1.0, 1.0});
  CHECK(quantize_binary(wv({0.3, 0.3, 0.3})).reconstruct() == std::vector<double>{0.3, 0.3, 0.3});
  const auto z = quantize_binary(wv({0.0, 0.0}));
  CHECK(z.scale == 0.0);
  CHECK(z.reconstruct() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("binary matches exhaustive search on small vectors") {
  std::mt19937_64 g(3);
  for (int t = 0; t < 50; ++t) {
    const auto w = oracle::gaussian(g, 1 + t % 10);
    CHECK(quantize_binary(wv(w)).reconstruct() == brute_levels_scaled(w));
  }
}

TEST_CASE("ternary hand examples") {
  const auto q = quantize_ternary(wv({0.5, -1.5, 1.0, 0.1}));
  CHECK(q.levels == std::vector<std::int32_t>{0, -1, 1, 0});
  CHECK(q.scale == Approx(1.25));
  const auto r = q.reconstruct();
  CHECK(r[1] == Approx(-1.25));
  CHECK(r[2] == Approx(1.25));
  CHECK(quantize_ternary(wv({0.7, -0.7})).reconstruct() == std::vector<double>{0.7, -0.7});
  const double e = 1e-3;
  CHECK(quantize_ternary(wv({e, -e, 10 * e})).levels == std::vector<std::int32_t>{0, 0, 1});
  CHECK(quantize_ternary(wv({0.0, 0.0})).scale == 0.0);
}

TEST_CASE("ternary threshold rule against the case-by-case oracle") {
  std::mt19937_64 g(5);
  for (int t = 0; t < 200; ++t) {
    const auto w = oracle::gaussian(g, 1 + t % 40);
    const auto ref = oracle::reference_ternary(w);
    const auto q = quantize_ternary(wv(w));
    CHECK(std::vector<int>(q.levels.begin(), q.levels.end()) == ref.levels);
    CHECK(q.scale == Approx(ref.alpha).epsilon(1e-12));
  }
}

TEST_CASE("fixed point") {
  const auto q = quantize_fixed(wv({-1.0, 0.5, 1.0}), 3);
  CHECK(q.levels == std::vector<std::int32_t>{-3, 2, 3});
  CHECK(q.scale == Approx(1.0 / 3));
  CHECK(q.reconstruct()[1] == Approx(0.6667).epsilon(1e-4));
  const auto zero = quantize_fixed(wv({0.0, 0.0, 0.0}), 3);
  CHECK(zero.reconstruct() == std::vector<double>{0.0, 0.0, 0.0});
  // On-grid input reconstructs exactly.
  std::vector<double> grid;
  for (int k = -127; k <= 127; k += 9) grid.push_back(0.01 * k);
  grid.push_back(1.27);
  const auto on = quantize_fixed(wv(grid), 8).reconstruct();
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(on[i] == Approx(grid[i]).epsilon(1e-12));
  CHECK_THROWS_AS(quantize_fixed(wv({1.0}), 2), InputError);
  CHECK(max_level(8) == 127);
}

TEST_CASE("fake_quantize dispatch") {
  const std::vector<double> w{0.5, -1.5, 1.0, 0.1};
  CHECK(fake_quantize(w, 1) == quantize_binary(wv(w)).reconstruct());
  CHECK(fake_quantize(w, 2) == quantize_ternary(wv(w)).reconstruct());
  CHECK(fake_quantize(w, 5) == quantize_fixed(wv(w), 5).reconstruct());
  CHECK(fake_quantize(w, 32) == w);
}

TEST_CASE("vector loss") {
  const std::vector<double> wf{1.0, 0.0};
  const std::vector<double> wq{1.0, 1.0};
  const auto r = vector_loss(wf, wq, 0.5);
  CHECK(r.cos_theta == Approx(1.0 / std::sqrt(2.0)));
  CHECK(r.orientation == Approx(0.29289).epsilon(1e-4));
  CHECK(r.modulus == Approx(0.5));
  CHECK(r.total == Approx(0.79289).epsilon(1e-4));
  CHECK(r.total - (r.orientation + r.modulus) == 0.0);

  const std::vector<double> par{2.0, 0.0};
  const auto p = vector_loss(wf, par, 0.5);
  CHECK(p.total == Approx(0.0).epsilon(1e-15));

  const std::vector<double> wq3{3.0, 3.0};
  CHECK(vector_loss(wf, wq3, 0.5 / 3).total == Approx(r.total).epsilon(1e-12));
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(vector_loss(zero, wq, 1.0), DegenerateError);
  CHECK_THROWS_AS(vector_loss(wf, zero, 1.0), DegenerateError);
  const std::vector<double> three{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(vector_loss(wf, three, 1.0), InputError);
}

TEST_CASE("orientation loss is scale invariant") {
  std::mt19937_64 g(17);
  for (int t = 0; t < 50; ++t) {
    auto w = oracle::gaussian(g, 32);
    const auto q = quantize_fixed(wv(w), 4).reconstruct();
    const double j = vector_loss(w, q, 1.0).orientation;
    for (auto& v : w) v *= 7.5;
    CHECK(std::abs(vector_loss(w, q, 1.0).orientation - j) <= 1e-12);
  }
}

TEST_CASE("steering and driving") {
  // Already on a 3-bit grid of pitch 0.2.
  const auto s = vecq_steer(wv({-0.6, -0.2, 0.0, 0.4, 0.6, 0.2}), 3);
  std::vector<double> v;
  for (auto l : s.levels) v.push_back(l);
  CHECK(vector_loss(std::vector<double>{-0.6, -0.2, 0.0, 0.4, 0.6, 0.2}, v, 1.0).orientation ==
        Approx(0.0).epsilon(1e-12));
  for (auto l : vecq_steer(wv({0.3, -1.2, 0.8, 0.05}), 2).levels) CHECK(std::abs(l) <= 1);

  CHECK(vecq_drive(wv({1.0, 0.0}), std::vector<std::int32_t>{1, 1}, 1.0) == Approx(0.5));
  CHECK(vecq_drive(wv({2.0, -3.0}), std::vector<std::int32_t>{2, -3}, 1.0) == Approx(1.0));

  std::mt19937_64 g(7);
  const auto w = oracle::gaussian(g, 64);
  const auto st = vecq_steer(wv(w), 3);
  const double sd = oracle::stddev(w);
  const double fine = oracle::grid_best_interval(w, 3, kSteerGridLo * sd, kSteerGridHi * sd, 10000);
  const double coarse_step = std::log(kSteerGridHi / kSteerGridLo) / (kSteerGridSize - 1);
  CHECK(std::abs(std::log(st.interval / fine)) <= coarse_step * (1 + 1e-9));
}

TEST_CASE("vecq against fixed and across bitwidths") {
  std::mt19937_64 g(7);
  const auto w = oracle::gaussian(g, 64);
  const auto v = vecq_quantize(wv(w), 4);
  const auto fixed = quantize_fixed(wv(w), 4);
  const auto jf = vector_loss(w, fixed.levels, fixed.scale);
  CHECK(v.report.total <= jf.total + 1e-9);
  double prev = 2.0;
  for (int b = 2; b <= 6; ++b) {
    const double jo = vecq_quantize(wv(w), b).report.orientation;
    CHECK(jo <= prev + 1e-12);
    prev = jo;
  }
  const auto grid = vecq_quantize(wv({0.5, -0.5, 1.0, 0.0}), 3);
  CHECK(grid.report.total == Approx(0.0).epsilon(1e-12));
}

TEST_CASE("activation statistics") {
  ActStats s;
  s = update_act_stats(s, std::vector<double>{2.0, -2.0});
  CHECK(s.p == Approx(2.0));
  s = update_act_stats(s, std::vector<double>{1.0, 1.0});
  CHECK(s.p == Approx(1.9));
  for (int i = 0; i < 300; ++i) s = update_act_stats(s, std::vector<double>{0.5});
  CHECK(s.p == Approx(0.5).epsilon(1e-9));
}

TEST_CASE("activation quantizer") {
  ActStats s;
  s = update_act_stats(s, std::vector<double>{1.0});
  const std::vector<double> on{0.0, 1.0 / 3, 2.0 / 3, 1.0};
  const auto id = quantize_activations(on, s, 2);
  for (std::size_t i = 0; i < on.size(); ++i) CHECK(id[i] == Approx(on[i]).epsilon(1e-15));

  ActStats p3;
  p3 = update_act_stats(p3, std::vector<double>{3.0});
  for (double y : quantize_activations(std::vector<double>{0.1, 1.2, 2.0, 5.0}, p3, 1)) CHECK((y == 0.0 || y == 3.0));

  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> batch(1000);
  for (auto& x : batch) x = u(g);
  const auto q = quantize_activations(batch, s, 8);
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(std::abs(q[i] - batch[i]) <= 1.0 / 256);
  CHECK_THROWS_AS(quantize_activations(batch, ActStats{}, 8), InputError);
}

TEST_CASE("quantized file round trip") {
  const auto dir = testsupport::scratch("quant");
  std::vector<QuantizedWeights> layers{quantize_ternary(wv({0.5, -1.5, 1.0, 0.1})),
                                       quantize_fixed(wv({-1.0, 0.5, 1.0}), 12)};
  layers[0].layer_id = "a";
  layers[1].layer_id = "b";
  save_quantized(dir / "q.cfq", layers);
  const auto back = load_quantized(dir / "q.cfq");
  REQUIRE(back.size() == 2);
  CHECK(back[0].levels == layers[0].levels);
  CHECK(back[1].levels == layers[1].levels);
  CHECK(back[1].bits == 12);
  CHECK(back[0].scale == layers[0].scale);
}

}  // TEST_SUITE
