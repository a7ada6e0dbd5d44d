#include <random>

#include "coforge/accel_model.hpp"
#include "coforge/error.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace coforge;
using namespace coforge::accel;
using doctest::Approx;

namespace {
ir::LayerSpec conv(int h, int w, int n, int m, int k = 3) {
  ir::LayerSpec l;
  l.id = "c";
  l.kind = ir::LayerKind::conv;
  l.input_h = h;
  l.input_w = w;
  l.in_channels = n;
  l.out_channels = m;
  l.kernel = k;
  l.padding = k / 2;
  l.quant_group = ir::QuantGroup::mid_conv;
  return l;
}
IpSpec ip(double lat, Tile t, ResourceVec r = {}) { return {"ip", lat, r, t, ""}; }
}  // namespace

TEST_SUITE("accel") {

TEST_CASE("reuse counts") {
  CHECK(reuse_count(conv(16, 16, 3, 32), ip(1, {16, 16, 3, 8})) == 4);
  CHECK(reuse_count(conv(7, 9, 5, 6), ip(1, {7, 9, 5, 6})) == 1);
  CHECK(reuse_count(conv(2, 2, 1, 1, 1), ip(1, {1, 1, 1, 1})) == 4);
}

TEST_CASE("comp latency against an invocation count") {
  BundleSpec b;
  b.ips = {ip(100, {16, 16, 3, 8})};
  CHECK(comp_latency(conv(16, 16, 3, 32), b) == 400);
  b.ips = {ip(100, {16, 16, 3, 8}), ip(50, {16, 16, 3, 16})};
  CHECK(comp_latency(conv(16, 16, 3, 32), b) == 500);

  std::mt19937_64 g(20);
  std::uniform_int_distribution<int> d(1, 40), t(1, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto l = conv(d(g), d(g), d(g), d(g));
    BundleSpec bb;
    bb.ips = {ip(t(g) * 10.0, {t(g), t(g), t(g), t(g)}), ip(t(g), {t(g), t(g), t(g), t(g)})};
    // Walk every tile origin and count invocations.
    double events = 0;
    for (const auto& p : bb.ips)
      for (int y = 0; y < l.out_h(); y += p.tile.h)
        for (int x = 0; x < l.out_w(); x += p.tile.w)
          for (int ci = 0; ci < l.in_channels; ci += p.tile.c_in)
            for (int co = 0; co < l.out_channels; co += p.tile.c_out) events += p.lat_cycles;
    CHECK(comp_latency(l, bb) == events);
  }
}

TEST_CASE("bundle latency") {
  BundleSpec b;
  b.alpha = 0.8;
  b.beta = 0.5;
  HardwareBudget hw;
  hw.bw_bytes_per_cycle = 16;
  CHECK(bundle_latency(400, 1024, b, hw) == 352);
  BundleSpec unit;
  CHECK(bundle_latency(400, 0, unit, hw) == 400);
  HardwareBudget half = hw;
  half.bw_bytes_per_cycle = 8;
  CHECK(bundle_latency(400, 1024, b, half) - 0.8 * 400 == 2 * (bundle_latency(400, 1024, b, hw) - 0.8 * 400));
}

TEST_CASE("resources") {
  BundleSpec b;
  b.ips = {ip(1, {}, {100, 1, 2, 3}), ip(1, {}, {200, 10, 20, 30})};
  b.gamma_overhead = {10, 0, 0, 0};
  const auto r = bundle_resource(b);
  CHECK(r[DSP] == 310);
  CHECK(r[LUT] == 11);
  CHECK(r[BRAM] == 33);
  b.gamma_overhead = {};
  CHECK(bundle_resource(b)[DSP] == 300);

  b.gamma_overhead = {10, 0, 0, 0};
  CalibrationParams cal;
  cal.gamma = 1;
  cal.res_ctl = {20, 0, 0, 0};
  HardwareBudget hw;
  hw.totals = {900, 1000, 1000, 100};
  const auto e = dnn_resource(b, cal, hw);
  CHECK(e.used[DSP] == 330);
  CHECK(e.utilization[DSP] == Approx(0.3667).epsilon(1e-4));
  CHECK(e.feasible);
  hw.totals[DSP] = 300;
  CHECK_FALSE(dnn_resource(b, cal, hw).feasible);
}

TEST_CASE("worksheet network") {
  const auto g = ir::load_model(testsupport::fixtures() / "worksheet.json");
  const auto hw = load_hw_config(testsupport::fixtures() / "worksheet_hw.toml");
  const auto est = dnn_latency(g, hw.bundle, hw.budget, hw.calibration, ir::parse_scheme("w-8-8888"));
  CHECK(est.repetitions == 3);
  for (const auto& s : est.segments) CHECK(s.cycles == 352);
  CHECK(est.cycles == 1256);
  CHECK(est.ms == Approx(0.00628));
  auto cal0 = hw.calibration;
  cal0.phi = 0;
  CHECK(dnn_latency(g, hw.bundle, hw.budget, cal0, ir::parse_scheme("w-8-8888")).cycles == 3 * 352);
}

TEST_CASE("decomposition") {
  const auto g = ir::parse_model(R"({"name": "d", "layers": [
    {"id": "c1", "kind": "conv", "in": [8, 8, 3], "out_channels": 4, "kernel": 3},
    {"id": "b1", "kind": "bn"},
    {"id": "p1", "kind": "pool", "kernel": 2, "stride": 2},
    {"id": "c2", "kind": "conv", "out_channels": 4, "kernel": 3},
    {"id": "f", "kind": "fc", "out_channels": 2}]})");
  BundleSpec b;
  b.ips = {ip(1, {})};
  b.pattern = {"conv3"};
  try {
    decompose(g, b);
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("'f'") != std::string::npos);
  }
  const auto ok = ir::parse_model(R"({"name": "d", "layers": [
    {"id": "c1", "kind": "conv", "in": [8, 8, 3], "out_channels": 4, "kernel": 3},
    {"id": "b1", "kind": "bn"},
    {"id": "p1", "kind": "pool", "kernel": 2, "stride": 2},
    {"id": "c2", "kind": "conv", "out_channels": 4, "kernel": 3}]})");
  const auto segs = decompose(ok, b);
  REQUIRE(segs.size() == 3);
  CHECK(segs[0].layers == std::vector<std::size_t>{0, 1});
  CHECK(segs[1].kind == Segment::Kind::transfer);
  CHECK(segs[2].repetition == 1);
  CHECK(entry_matches("conv", ok.layers[0]));
  CHECK_FALSE(entry_matches("conv1", ok.layers[0]));
  CHECK_THROWS_AS(parse_pattern_entry("bn"), InputError);
}

TEST_CASE("hardware files") {
  CHECK_THROWS_AS(parse_hw_config("[budget]\ndsp = -1\n"), InputError);
  try {
    load_hw_config("/nonexistent/hw.toml");
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/hw.toml") != std::string::npos);
  }
  const auto hw = load_hw_config(testsupport::fixtures() / "worksheet_hw.toml");
  CHECK(hw.budget.totals[DSP] == 900);
  CHECK(hw.bundle.alpha == 0.8);
  CHECK(hw.bundle.ips.at(0).tile.c_out == 4);
  CHECK(hw.calibration.res_ctl[BRAM] == 4);
}

}  // TEST_SUITE
