#include <cmath>
#include <random>

#include "coforge/edd.hpp"
#include "coforge/error.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "reference_setups.hpp"
#include "test_support.hpp"

using namespace coforge;
using namespace coforge::edd;
using doctest::Approx;

namespace {
PerfTable two_op_table(double a, double b) {
  PerfTable t;
  t.entries = {{{PerfEntry{a, {1, 0, 0, 0}}}, {PerfEntry{b, {3, 0, 0, 0}}}}};
  return t;
}
}  // namespace

TEST_SUITE("edd") {

TEST_CASE("gumbel softmax") {
  const std::vector<double> theta{1.0, 3.0, 4.0};
  const std::vector<double> zero(3, 0.0);
  const auto y = gumbel_softmax(theta, zero, 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == Approx(theta[i] / 8.0).epsilon(1e-14));

  const std::vector<double> g{0.3, -0.2, 0.1};
  const auto sharp = gumbel_softmax(theta, g, 1e-3);
  CHECK(sharp[2] > 0.999);

  Rng rng(5);
  const auto s = sample(theta, 0.7, rng);
  double sum = 0.0;
  for (double v : s.y) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-12);
  CHECK(s.y == gumbel_softmax(theta, s.g, 0.7));

  const std::vector<double> bad{1.0, 0.0, 2.0};
  CHECK_THROWS_AS(gumbel_softmax(bad, zero, 1.0), InputError);
  CHECK_THROWS_AS(gumbel_softmax(theta, zero, 0.0), InputError);
}

TEST_CASE("expected latency") {
  const auto t = two_op_table(100, 300);
  CHECK(expected_latency(t, {{0.5, 0.5}}, {{{1.0}, {1.0}}}) == Approx(200));
  CHECK(expected_latency(t, {{0.0, 1.0}}, {{{1.0}, {1.0}}}) == 300);
  CHECK(expected_latency(two_op_table(90, 300), {{0.5, 0.5}}, {{{1.0}, {1.0}}}) < 200);

  ad::Tape tape;
  Relaxation r;
  r.ops = {tape.constant(ad::Tensor::vector({0.25, 0.75}))};
  r.bits = {{tape.constant(ad::Tensor::vector({1.0})), tape.constant(ad::Tensor::vector({1.0}))}};
  const auto e = expected_perf(tape, t, r);
  CHECK(e.latency.value().item() == Approx(250));
  CHECK(e.res[accel::DSP].value().item() == Approx(2.5));
}

TEST_CASE("perf table") {
  const auto net = refsetup::tradeoff_net();
  const auto table = build_perf_table(net, refsetup::tradeoff_ips());
  // wide_relu: hidden 16 on "slow" (tile 8x8): expand 1*2 + project 2*1 invocations.
  CHECK(table.at(0, 0, 1).lat == Approx(4 * 40.0));
  CHECK(table.at(0, 0, 0).lat == Approx(4 * 40.0 * 0.5));
  // linear: hidden 4 on "fast": one invocation each way.
  CHECK(table.at(1, 1, 1).lat == Approx(2 * 10.0));
  CHECK(table.at(0, 1, 0).res[accel::DSP] == Approx(8));
  try {
    build_perf_table(net, {refsetup::tradeoff_ips()[0]});
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("block 0") != std::string::npos);
    CHECK(msg.find("wide_relu") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
}

TEST_CASE("loss assembly") {
  ad::Tape t;
  const auto acc = t.constant(ad::Tensor::scalar(0.3));
  const auto perf = t.constant(ad::Tensor::scalar(2.0));
  std::array<ad::Var, accel::kResourceTypes> res;
  for (auto& v : res) v = t.constant(ad::Tensor::scalar(50.0));
  res[accel::DSP] = t.constant(ad::Tensor::scalar(100.0));
  EddLossParams p;
  p.beta = 0.1;
  p.res_ub = {{"dsp", 120.0}};
  CHECK(edd_loss(acc, perf, res, p).value().item() == Approx(0.6846).epsilon(1e-4));
  CHECK(edd_loss(acc, perf, res, p).value().item() == Approx(0.6 + 0.1 * std::exp(-1.0 / 6)).epsilon(1e-14));
  p.beta = 0.0;
  CHECK(edd_loss(acc, perf, res, p).value().item() == Approx(0.6));
  p.beta = 0.5;
  p.res_ub = {{"dsp", 100.0}, {"lut", 50.0}};
  CHECK(edd_loss(acc, perf, res, p).value().item() == Approx(0.6 + 0.5 * 2));
  p.res_ub = {{"dsp", 0.0}};
  CHECK_THROWS_AS(edd_loss(acc, perf, res, p), InputError);

  const auto lat = t.constant(ad::Tensor::scalar(150.0));
  CHECK(perf_loss(lat, 150.0, 7.0).value().item() == Approx(1.0));
  CHECK(perf_loss(lat, 100.0, 0.0).value().item() == 1.0);
  CHECK(perf_loss(lat, 100.0, 1e9).value().item() == Approx(1.5));
  CHECK_THROWS_AS(perf_loss(lat, 0.0, 1.0), InputError);
}

TEST_CASE("temperature schedule") {
  EddConfig c;
  c.steps = 11;
  CHECK(temperature(c, 1) == Approx(5.0));
  CHECK(temperature(c, 11) == Approx(0.5));
  CHECK(temperature(c, 6) == Approx(2.75));
  c.steps = 0;
  CHECK_THROWS_AS(validate(c), InputError);
}

TEST_CASE("sampling-parameter gradients match finite differences") {
  const auto net = refsetup::tradeoff_net();
  const auto table = build_perf_table(net, refsetup::tradeoff_ips());
  const auto data = refsetup::tradeoff_data();
  EddLossParams p;
  p.beta = 0.05;
  p.res_ub = {{"dsp", 60.0}};
  std::vector<std::size_t> idx(16);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i * 7;
  const auto x = qat::batch_inputs(data, idx);
  const auto y = qat::batch_labels(data, idx);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto state = init_state(net, seed);
    Rng rng(seed);
    const auto noise = draw_noise(net, rng);
    Gradients g;
    forward_step(net, table, state, x, y, noise, 1.3, p, 150.0, std::nullopt, &g);
    std::vector<double> flat{state.theta[0][0], state.theta[0][1], state.theta_bits[1][0][0], state.theta_bits[1][0][1]};
    const std::vector<double> analytic{g.d.theta[0][0], g.d.theta[0][1], g.d.theta_bits[1][0][0],
                                       g.d.theta_bits[1][0][1]};
    const auto f = [&](const std::vector<double>& v) {
      auto s = state;
      s.theta[0] = {v[0], v[1]};
      s.theta_bits[1][0] = {v[2], v[3]};
      return forward_step(net, table, s, x, y, noise, 1.3, p, 150.0, std::nullopt, nullptr).loss;
    };
    CHECK(oracle::relative_error(analytic, oracle::numeric_grad(f, flat, 1e-6)) < 1e-4);
  }
}

TEST_CASE("frozen one-hot path trains like the plain trainer") {
  SupernetSpec net;
  net.width = 6;
  net.classes = 2;
  net.bits = {4, 8};
  BlockSpec b;
  b.ops = {{"r", Activation::relu, 1.5, "fast"}, {"l", Activation::identity, 1.0, "slow"}};
  net.blocks = {b, b};
  const auto table = build_perf_table(net, refsetup::tradeoff_ips());
  const auto data = refsetup::tradeoff_data();
  EddLossParams p;
  p.perf_weight = 0.0;
  EddConfig cfg;
  cfg.steps = 60;
  cfg.seed = 4;
  cfg.frozen = Selection{{0, 1}, {0, 1}};
  const auto r = edd_search(net, table, data, p, cfg);

  // The same network written as a plain model: fc layers with the EDD ids.
  const auto graph = ir::parse_model(R"({"name": "path", "layers": [
    {"id": "stem", "kind": "fc", "in": [1, 1, 2], "out_channels": 6, "quant_group": "first_conv"},
    {"id": "s_act", "kind": "act"},
    {"id": "b0_r_expand", "kind": "fc", "out_channels": 9, "quant_group": "mid_fc"},
    {"id": "b0_act", "kind": "act"},
    {"id": "b0_r_project", "kind": "fc", "out_channels": 6, "quant_group": "mid_fc"},
    {"id": "b1_r_expand", "kind": "fc", "out_channels": 9, "quant_group": "mid_fc"},
    {"id": "b1_act", "kind": "act"},
    {"id": "b1_r_project", "kind": "fc", "out_channels": 6, "quant_group": "mid_fc"},
    {"id": "head", "kind": "fc", "out_channels": 2, "quant_group": "last_fc"}]})");
  qat::TrainConfig tc;
  tc.steps = cfg.steps;
  tc.seed = cfg.seed;
  tc.learning_rate = cfg.lr_weights;
  tc.batch_size = cfg.batch_size;
  tc.scheme = {32, 32, 32, 8, 32};
  const auto q = qat::train(graph, data, tc);
  REQUIRE(r.trace.size() == q.step_loss.size());
  for (std::size_t i = 0; i < q.step_loss.size(); ++i) CHECK(std::abs(r.trace[i].loss - q.step_loss[i]) <= 1e-9);
  CHECK(r.state.theta == init_state(net, cfg.seed).theta);
  CHECK(r.selection == *cfg.frozen);
}

TEST_CASE("planted op is chosen") {
  const auto r = refsetup::edd_planted(testsupport::fixtures(), 10);
  CHECK(r.selected >= 9);
}

TEST_CASE("perf weight zero follows accuracy alone") {
  // A wide ReLU op against a one-unit linear bottleneck that happens to be fast.
  SupernetSpec net;
  net.width = 8;
  net.classes = 2;
  net.bits = {4, 8};
  BlockSpec blk;
  blk.ops = {{"wide", Activation::relu, 2.0, "slow"}, {"narrow", Activation::identity, 0.125, "fast"}};
  net.blocks = {blk, blk};
  const auto table = build_perf_table(net, refsetup::tradeoff_ips());
  const auto data = refsetup::tradeoff_data();
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    EddLossParams p;
    p.perf_weight = 0.0;
    EddConfig cfg;
    cfg.seed = seed;
    const auto searched = edd_search(net, table, data, p, cfg);
    // Oracle: train every op combination on its own and keep the most accurate.
    double best = -1.0;
    std::pair<int, int> best_ops{-1, -1};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        auto c = cfg;
        c.frozen = Selection{{a, 1}, {b, 1}};
        const double acc = edd_search(net, table, data, p, c).selected_accuracy;
        if (acc > best) {
          best = acc;
          best_ops = {a, b};
        }
      }
    agree += searched.selection[0].first == best_ops.first && searched.selection[1].first == best_ops.second;
  }
  CHECK(agree >= 8);
}

TEST_CASE("latency falls as the perf weight grows") {
  const auto s = refsetup::edd_sweep(10);
  CHECK(s.inversions <= 1);
  CHECK(s.mean[2] < s.mean[0]);
}

TEST_CASE("config file") {
  const auto spec = load_edd_spec(testsupport::fixtures() / "edd_planted.json");
  CHECK(spec.net.blocks.size() == 2);
  CHECK(spec.net.blocks[1].ops[0].name == "relu_fast");
  CHECK(spec.cfg.steps == 300);
  const auto dir = testsupport::scratch("edd_cfg");
  testsupport::write_text(dir / "bad.json", R"({"hw": "nowhere.toml", "width": 8, "frobnicate": 1})");
  CHECK_THROWS_AS(load_edd_spec(dir / "bad.json"), InputError);
}

}  // TEST_SUITE
