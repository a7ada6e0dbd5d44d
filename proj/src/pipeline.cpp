#include "coforge/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "coforge/error.hpp"

namespace coforge::pipeline {

void validate(const StageSpec& s) {
  const std::string where = "stage '" + s.layer_id + "'";
  if (!(s.latency > 0.0) || !std::isfinite(s.latency)) throw InputError(where + ": latency must be positive");
  if (s.stride < 1 || s.kernel < s.stride)
    throw InputError(where + ": need K >= S >= 1, got K=" + std::to_string(s.kernel) + " S=" +
                     std::to_string(s.stride));
  if (s.rows < s.kernel)
    throw InputError(where + ": " + std::to_string(s.rows) + " rows cannot hold a " + std::to_string(s.kernel) +
                     "-row window");
}

ColumnCachePlan column_cache_plan(const ir::LayerSpec& layer, int act_bits, std::optional<int> slice_rows) {
  using ir::LayerKind;
  if (layer.kind != LayerKind::conv && layer.kind != LayerKind::dwconv && layer.kind != LayerKind::pool)
    throw InputError("layer '" + layer.id + "': column caching applies to convolution and pooling layers");
  if (layer.kernel < layer.stride)
    throw InputError("layer '" + layer.id + "': K < S is not supported by the column cache");
  if (act_bits < 1 || act_bits > 32) throw InputError("activation bitwidth must lie in 1..32");
  const int slice = slice_rows.value_or(layer.stride);
  if (slice < 1) throw InputError("slice rows must be positive");

  ColumnCachePlan p;
  p.layer_id = layer.id;
  p.slice_rows = slice;
  p.buffer_rows = layer.kernel + layer.stride + slice;
  const std::int64_t row_bytes = std::int64_t{layer.input_w} * layer.in_channels * bytes_per_element(act_bits);
  p.buffer_bytes = p.buffer_rows * row_bytes;
  p.full_map_bytes = std::int64_t{layer.input_h} * row_bytes;
  p.reduction = static_cast<double>(p.full_map_bytes) / static_cast<double>(p.buffer_bytes);
  return p;
}

double two_column_cycles(const StageSpec& s) {
  const double frac = std::min(1.0, static_cast<double>(s.kernel + s.stride) / s.rows);
  return s.latency * frac;
}

namespace {
void check(const std::vector<StageSpec>& stages) {
  if (stages.empty()) throw InputError("empty stage list");
  for (const auto& s : stages) validate(s);
}
}  // namespace

double conventional_startup(const std::vector<StageSpec>& stages) {
  check(stages);
  double t = 0.0;
  for (const auto& s : stages) t += s.latency;
  return t;
}

double finegrained_startup(const std::vector<StageSpec>& stages) {
  check(stages);
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < stages.size(); ++i) t += two_column_cycles(stages[i]);
  return t + stages.back().latency;
}

double steady_throughput(const std::vector<StageSpec>& stages) {
  check(stages);
  double worst = 0.0;
  for (const auto& s : stages) worst = std::max(worst, s.latency);
  return 1000.0 / worst;
}

Schedule schedule(const std::vector<StageSpec>& stages) {
  check(stages);
  Schedule out;
  double fine = 0.0;
  double conv = 0.0;
  for (const auto& s : stages) {
    StartupRow r{s.layer_id, s.latency, two_column_cycles(s), fine, conv};
    fine += r.two_column_cycles;
    conv += s.latency;
    out.rows.push_back(r);
  }
  out.conventional = conventional_startup(stages);
  out.finegrained = finegrained_startup(stages);
  out.ratio = out.conventional / out.finegrained;
  out.throughput = steady_throughput(stages);
  return out;
}

std::vector<StageSpec> build_stages(const ir::ModelGraph& graph, const accel::BundleSpec& bundle,
                                    const accel::HardwareBudget& hw, const ir::QuantScheme& scheme) {
  using ir::LayerKind;
  std::vector<std::vector<std::size_t>> runs;
  std::vector<std::size_t> leading;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    if (ir::is_weighted(graph.layers[i].kind)) {
      runs.push_back({i});
      if (runs.size() == 1) {
        runs.back().insert(runs.back().begin(), leading.begin(), leading.end());
        leading.clear();
      }
    } else if (runs.empty()) {
      leading.push_back(i);
    } else {
      runs.back().push_back(i);
    }
  }
  if (runs.empty()) throw InputError("model '" + graph.name + "' has no major layer to pipeline");

  std::vector<StageSpec> stages;
  for (const auto& run : runs) {
    std::vector<const ir::LayerSpec*> layers;
    double comp = 0.0;
    const ir::LayerSpec* major = nullptr;
    for (auto i : run) {
      const auto& l = graph.layers[i];
      layers.push_back(&l);
      if (!major && ir::is_weighted(l.kind)) major = &l;
      for (const auto* ip : accel::ips_for_layer(bundle, l))
        comp += static_cast<double>(accel::reuse_count(l, *ip)) * ip->lat_cycles;
    }
    const double theta = static_cast<double>(accel::theta_bytes(layers, scheme));
    StageSpec s;
    s.layer_id = major->id;
    s.latency = accel::bundle_latency(comp, theta, bundle, hw);
    s.rows = major->input_h;
    s.kernel = major->kernel;
    s.stride = major->stride;
    if (!(s.latency > 0.0))
      throw InputError("stage '" + s.layer_id + "' has zero latency; no IP serves it and it moves no data");
    stages.push_back(s);
  }
  return stages;
}

std::vector<ColumnCachePlan> column_cache_plans(const ir::ModelGraph& graph, int act_bits,
                                                std::optional<int> slice_rows) {
  std::vector<ColumnCachePlan> plans;
  for (const auto& l : graph.layers)
    if (l.kind == ir::LayerKind::conv || l.kind == ir::LayerKind::dwconv || l.kind == ir::LayerKind::pool)
      plans.push_back(column_cache_plan(l, act_bits, slice_rows));
  return plans;
}

}  // namespace coforge::pipeline
