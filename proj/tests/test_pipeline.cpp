#include <random>

#include "coforge/error.hpp"
#include "coforge/pipeline.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace coforge;
using namespace coforge::pipeline;
using doctest::Approx;

namespace {
ir::LayerSpec layer(int h, int w, int c, int k, int s, ir::LayerKind kind = ir::LayerKind::conv) {
  ir::LayerSpec l;
  l.id = "l";
  l.kind = kind;
  l.input_h = h;
  l.input_w = w;
  l.in_channels = c;
  l.out_channels = c;
  l.kernel = k;
  l.stride = s;
  l.padding = kind == ir::LayerKind::pool ? 0 : k / 2;
  return l;
}
}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("column cache sizing") {
  const auto p = column_cache_plan(layer(224, 224, 3, 3, 1), 16);
  CHECK(p.buffer_rows == 5);
  CHECK(p.buffer_bytes == 6720);
  CHECK(p.full_map_bytes == 301056);
  CHECK(p.reduction == Approx(44.8));
  CHECK(column_cache_plan(layer(64, 64, 8, 2, 2, ir::LayerKind::pool), 8).buffer_rows == 6);
  CHECK(column_cache_plan(layer(224, 224, 3, 3, 1), 16, 3).buffer_rows == 3 + 1 + 3);
  CHECK(bytes_per_element(1) == 1);
  CHECK(bytes_per_element(9) == 2);
}

TEST_CASE("startup worksheets") {
  const StageSpec one{"a", 500, 100, 3, 1};
  CHECK(conventional_startup({one}) == 500);
  CHECK(finegrained_startup({one}) == 500);
  const std::vector<StageSpec> ten(10, StageSpec{"s", 1000, 100, 3, 1});
  CHECK(conventional_startup(ten) == 10000);
  CHECK(finegrained_startup(ten) == Approx(1360));
  CHECK(schedule(ten).ratio == Approx(10.0 / 1.36));
  CHECK_THROWS_AS(finegrained_startup({}), InputError);
}

TEST_CASE("random stage lists") {
  std::mt19937_64 g(42);
  std::uniform_real_distribution<double> lat(1, 1000);
  std::uniform_int_distribution<int> rows(1, 128), k(1, 7), n(1, 12);
  for (int t = 0; t < 1000; ++t) {
    std::vector<StageSpec> s;
    std::vector<oracle::Stage> o;
    double fold = 0.0;
    const int len = n(g);
    for (int i = 0; i < len; ++i) {
      const int kk = k(g);
      const int stride = 1 + (kk > 1 ? t % kk : 0);
      StageSpec st{"s" + std::to_string(i), lat(g), std::max(rows(g), kk + stride), kk, stride};
      s.push_back(st);
      o.push_back({st.latency, st.rows, st.kernel, st.stride});
      fold += st.latency;
    }
    CHECK(conventional_startup(s) == Approx(fold).epsilon(1e-12));
    CHECK(finegrained_startup(s) <= conventional_startup(s) + 1e-9);
    CHECK(finegrained_startup(s) == Approx(oracle::startup_closed_form(o)).epsilon(1e-12));
  }
}

TEST_CASE("throughput") {
  const std::vector<StageSpec> eq(4, StageSpec{"s", 250, 10, 3, 1});
  CHECK(steady_throughput(eq) == Approx(1000.0 / 250));
  auto slow = eq;
  slow[2].latency = 1000;
  CHECK(steady_throughput(slow) == Approx(1.0));
  auto more = slow;
  more.push_back({"fast", 10, 10, 3, 1});
  CHECK(steady_throughput(more) >= steady_throughput(slow));
}

TEST_CASE("stages from the ten-layer model") {
  const auto g = ir::load_model(testsupport::fixtures() / "pipe10.json");
  const auto hw = accel::load_hw_config(testsupport::fixtures() / "pipe10_hw.toml");
  const auto stages = build_stages(g, hw.bundle, hw.budget, ir::parse_scheme("p-8-8888"));
  REQUIRE(stages.size() == 10);
  for (const auto& s : stages) CHECK(s.rows == 100);
  const auto sch = schedule(stages);
  CHECK(sch.ratio >= 5.0);
  CHECK(sch.ratio <= 10.0);
  CHECK(column_cache_plans(g, 8).size() == 10);
}

}  // TEST_SUITE
