#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coforge/accel_model.hpp"
#include "coforge/model_ir.hpp"

// Layer-pipeline startup model and column-based line-buffer sizing.
//
// Stage i may start as soon as stage i-1 has produced two columns of its
// output, that is K+S of its H rows. Production is prorated linearly over
// the frame, so the wait costs latency_{i-1} * (K+S)/H.

namespace coforge::pipeline {

struct StageSpec {
  std::string layer_id;
  double latency = 1.0;  // cycles per frame
  int rows = 1;          // H of the stage's input
  int kernel = 1;
  int stride = 1;
};

void validate(const StageSpec& s);

struct ColumnCachePlan {
  std::string layer_id;
  int slice_rows = 1;
  int columns_cached = 2;
  int buffer_rows = 0;
  std::int64_t buffer_bytes = 0;
  std::int64_t full_map_bytes = 0;
  double reduction = 0.0;  // full_map_bytes / buffer_bytes
};

inline int bytes_per_element(int act_bits) { return (act_bits + 7) / 8; }

// Ring buffer over the layer's input rows: two live columns (K+S rows) and
// one slice in flight. A slice defaults to S rows; `slice_rows` overrides it.
ColumnCachePlan column_cache_plan(const ir::LayerSpec& layer, int act_bits,
                                  std::optional<int> slice_rows = std::nullopt);

// Time for a stage to emit its first two columns, never more than a frame.
double two_column_cycles(const StageSpec& s);

double conventional_startup(const std::vector<StageSpec>& stages);
double finegrained_startup(const std::vector<StageSpec>& stages);
// Frames per thousand cycles at the bottleneck stage.
double steady_throughput(const std::vector<StageSpec>& stages);

struct StartupRow {
  std::string layer_id;
  double latency = 0.0;
  double two_column_cycles = 0.0;
  double finegrained_start = 0.0;
  double conventional_start = 0.0;
};

struct Schedule {
  std::vector<StartupRow> rows;
  double conventional = 0.0;
  double finegrained = 0.0;
  double ratio = 0.0;  // conventional / finegrained
  double throughput = 0.0;
};

Schedule schedule(const std::vector<StageSpec>& stages);

// One stage per major layer. bn, act and pooling layers join the stage of
// the preceding major layer (leading ones join the first). The latency of
// a stage is the bundle latency of its layer run, charging each layer the
// IPs whose target matches it.
std::vector<StageSpec> build_stages(const ir::ModelGraph& graph, const accel::BundleSpec& bundle,
                                    const accel::HardwareBudget& hw, const ir::QuantScheme& scheme);

// Cache plans for every conv, dwconv and pool layer of the graph.
std::vector<ColumnCachePlan> column_cache_plans(const ir::ModelGraph& graph, int act_bits,
                                                std::optional<int> slice_rows = std::nullopt);

}  // namespace coforge::pipeline
