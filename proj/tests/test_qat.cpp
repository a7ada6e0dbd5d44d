#include <cmath>

#include "coforge/error.hpp"
#include "coforge/qat.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace coforge;
using namespace coforge::qat;

namespace {
const ir::ModelGraph& blobs_mlp() {
  static const auto g = ir::load_model(testsupport::fixtures() / "blobs_mlp.json");
  return g;
}
SyntheticDataset blobs(std::uint64_t seed) { return make_dataset(Generator::gaussian_blobs, 256, 2, seed); }
}  // namespace

TEST_SUITE("qat") {

TEST_CASE("datasets are balanced and seeded") {
  const auto a = make_dataset(Generator::two_spirals, 90, 3, 4, 0.05, 1.0);
  CHECK(a.size() == 90);
  int count[3] = {0, 0, 0};
  for (int l : a.labels) ++count[l];
  CHECK(count[0] == 30);
  CHECK(count[2] == 30);
  const auto b = make_dataset(Generator::two_spirals, 90, 3, 4, 0.05, 1.0);
  CHECK(a.points == b.points);
  CHECK(make_dataset(Generator::two_spirals, 90, 3, 5, 0.05, 1.0).points != a.points);
  CHECK(parse_generator("gaussian_blobs") == Generator::gaussian_blobs);
  CHECK_THROWS_AS(parse_generator("moons"), InputError);
}

TEST_CASE("float baseline on blobs") {
  TrainConfig cfg;
  cfg.steps = 500;
  const auto r = train(blobs_mlp(), blobs(0), cfg);
  const double acc = evaluate(r.model, blobs(0), cfg.scheme);
  CHECK(acc >= 0.99);
  CHECK(r.step_loss.size() == 500);
  CHECK(r.history.back().step == 500);

  cfg.scheme = ir::QuantScheme::uniform(8);
  const auto q = train(blobs_mlp(), blobs(0), cfg);
  CHECK(evaluate(q.model, blobs(0), cfg.scheme) >= acc - 0.02);
}

TEST_CASE("zero steps keeps the initial weights") {
  TrainConfig cfg;
  cfg.steps = 0;
  const auto r = train(blobs_mlp(), blobs(1), cfg);
  CHECK(r.history.empty());
  CHECK(r.step_loss.empty());
  const auto init = build_mlp(blobs_mlp(), cfg.seed);
  for (std::size_t i = 0; i < init.layers.size(); ++i) CHECK(r.model.layers[i].w == init.layers[i].w);
}

TEST_CASE("forward pass consumes quantized weights") {
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.scheme = ir::parse_scheme("blobs-4-2233");
  int calls = 0;
  Mlp shadow = build_mlp(blobs_mlp(), cfg.seed);
  TrainHooks hooks;
  hooks.on_forward = [&](int, const DenseLayer& l, std::span<const double> fw) {
    ++calls;
    CHECK(std::vector<double>(fw.begin(), fw.end()) == quant::fake_quantize(l.w, cfg.scheme.bits_for(l.group)));
  };
  train(blobs_mlp(), blobs(2), cfg, hooks);
  CHECK(calls == 40);
}

TEST_CASE("random weights sit near chance") {
  // Interleaved spirals: an untrained net cannot line up with either class.
  double sum = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = build_mlp(blobs_mlp(), 100 + s);
    sum += evaluate(m, make_dataset(Generator::two_spirals, 256, 2, s, 0.05, 1.5), ir::QuantScheme::uniform(32));
  }
  const double mean = sum / 10;
  CHECK(mean >= 0.35);
  CHECK(mean <= 0.65);
}

TEST_CASE("accuracy helpers") {
  const std::vector<int> labels{0, 1, 1, 1};
  CHECK(accuracy_of({{1, 0}, {0, 1}, {0, 1}, {0, 1}}, labels) == 1.0);
  CHECK(accuracy_of({{0, 0}, {0, 0}, {0, 0}, {0, 0}}, labels) == 0.25);
  CHECK(accuracy_of({{0, 1}, {0, 1}, {0, 1}, {0, 1}}, labels) == 0.75);
  CHECK_THROWS_AS(accuracy_of({}, std::span<const int>{}), InputError);
}

TEST_CASE("perfect separation") {
  // Blobs on a circle: the two centres sit on opposite sides of the x axis
  // or y axis; a large linear map along the centre difference separates them.
  auto data = make_dataset(Generator::gaussian_blobs, 200, 2, 3, 0.05, 1.5);
  double c[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < data.size(); ++i)
    for (int k = 0; k < 2; ++k) c[data.labels[i]][k] += data.points[i][k] / 100;
  Mlp m = build_mlp(blobs_mlp(), 0);
  auto& h = m.layers[0];
  auto& o = m.layers[1];
  std::fill(h.w.begin(), h.w.end(), 0.0);
  std::fill(o.w.begin(), o.w.end(), 0.0);
  const double dx = c[1][0] - c[0][0], dy = c[1][1] - c[0][1];
  const double mx = (c[1][0] + c[0][0]) / 2, my = (c[1][1] + c[0][1]) / 2;
  // hidden 0: relu(d . (x - m)), hidden 1: relu(-d . (x - m))
  h.w[0 * h.out + 0] = dx;
  h.w[1 * h.out + 0] = dy;
  h.w[0 * h.out + 1] = -dx;
  h.w[1 * h.out + 1] = -dy;
  h.b[0] = -(dx * mx + dy * my);
  h.b[1] = dx * mx + dy * my;
  o.w[0 * o.out + 1] = 1.0;
  o.w[1 * o.out + 0] = 1.0;
  CHECK(evaluate(m, data, ir::QuantScheme::uniform(32)) == 1.0);
}

TEST_CASE("model restrictions and errors") {
  CHECK_THROWS_AS(build_mlp(ir::parse_model(R"({"name": "c", "layers": [
    {"id": "c", "kind": "conv", "in": [4, 4, 2], "out_channels": 2, "kernel": 3}]})"),
                            0),
                  InputError);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(blobs_mlp(), blobs(0), cfg), InputError);
  cfg = {};
  cfg.learning_rate = 1.0;
  cfg.steps = 200;
  auto far = blobs(0);
  for (auto& p : far.points) p = {p[0] * 1e6, p[1] * 1e6};
  CHECK_THROWS_AS(train(blobs_mlp(), far, cfg), DivergenceError);
  CHECK_THROWS_AS(train(blobs_mlp(), make_dataset(Generator::gaussian_blobs, 30, 3, 0), TrainConfig{}), InputError);
}

TEST_CASE("1x1 convolutions on 1x1 maps count as dense") {
  const auto g = ir::load_model(testsupport::fixtures() / "mlp4.json");
  const auto m = build_mlp(g, 0);
  CHECK(m.layers.size() == 4);
  CHECK(m.act_stats.size() == 3);
  CHECK(m.layers[1].group == ir::QuantGroup::mid_conv);
  CHECK(m.layers[2].group == ir::QuantGroup::mid_fc);
}

}  // TEST_SUITE
