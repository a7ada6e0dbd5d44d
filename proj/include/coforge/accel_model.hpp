#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coforge/model_ir.hpp"

// Analytical latency and resource model for bundle-based accelerators.
//
// A bundle is a short sequence of major layers (the pattern) implemented by
// a set of IPs. A network is decomposed into repetitions of that pattern;
// each repetition is executed by the same hardware, so resources are paid
// once while latency accumulates per repetition. Latency is in cycles
// throughout; milliseconds only appear in reports.

namespace coforge::accel {

enum Resource : std::size_t { DSP = 0, LUT = 1, FF = 2, BRAM = 3 };
inline constexpr std::size_t kResourceTypes = 4;
inline constexpr std::array<std::string_view, kResourceTypes> kResourceNames{"dsp", "lut", "ff", "bram"};

using ResourceVec = std::array<double, kResourceTypes>;

struct Tile {
  int h = 1;
  int w = 1;
  int c_in = 1;
  int c_out = 1;
};

struct IpSpec {
  std::string id;
  double lat_cycles = 1.0;
  ResourceVec res{};
  Tile tile;
  // Pattern entry this IP computes ("conv3", "fc", ...) or "pool" for stand
  // alone pooling layers. Empty means the first pattern entry.
  std::string layer;
};

struct BundleSpec {
  std::string id;
  std::vector<IpSpec> ips;
  double alpha = 1.0;
  double beta = 1.0;
  ResourceVec gamma_overhead{};
  // Major layer sequence of one repetition. An entry is a layer kind with an
  // optional kernel size: "conv" matches any convolution, "conv3" only 3x3.
  std::vector<std::string> pattern{"conv"};
};

struct HardwareBudget {
  ResourceVec totals{};
  double bw_bytes_per_cycle = 1.0;
  double freq_mhz = 100.0;
};

struct CalibrationParams {
  double phi = 0.0;
  double lat_dm = 0.0;
  double gamma = 0.0;
  ResourceVec res_ctl{};
};

void validate(const IpSpec& ip);
void validate(const BundleSpec& bundle);
void validate(const HardwareBudget& hw);
void validate(const CalibrationParams& cal);

// A pattern entry: layer kind plus kernel size, 0 meaning any kernel.
struct PatternEntry {
  ir::LayerKind kind = ir::LayerKind::conv;
  int kernel = 0;
};
PatternEntry parse_pattern_entry(std::string_view entry);

// True when `entry` ("conv", "conv3", "pool2", "fc", ...) describes layer l.
bool entry_matches(std::string_view entry, const ir::LayerSpec& l);
// The pattern entry an IP serves, with the empty default resolved.
std::string resolved_target(const IpSpec& ip, const BundleSpec& bundle);
// IPs whose target entry matches the layer.
std::vector<const IpSpec*> ips_for_layer(const BundleSpec& bundle, const ir::LayerSpec& l);

// ceil(out_h/h) * ceil(out_w/w) * ceil(N/c_in) * ceil(M/c_out), N being the
// fan-in channel count of the layer.
std::int64_t reuse_count(const ir::LayerSpec& layer, const IpSpec& ip);

// Sum over all bundle IPs of reuse * lat.
double comp_latency(const ir::LayerSpec& layer, const BundleSpec& bundle);

// Off-chip bytes for a contiguous run of layers: the run's input and output
// feature maps at the activation bitwidth plus every weight tensor at its
// group bitwidth, each tensor packed and rounded up to whole bytes.
std::int64_t theta_bytes(const std::vector<const ir::LayerSpec*>& run, const ir::QuantScheme& scheme);
std::int64_t theta_bytes(const ir::LayerSpec& layer, const ir::QuantScheme& scheme);

// alpha * comp + beta * theta / bw.
double bundle_latency(double comp_cycles, double theta, const BundleSpec& bundle, const HardwareBudget& hw);
double bundle_latency(const ir::LayerSpec& layer, const BundleSpec& bundle, const HardwareBudget& hw,
                      const ir::QuantScheme& scheme);

struct ResourceEstimate {
  ResourceVec used{};
  ResourceVec utilization{};  // used / total; zero when no budget applies
  bool feasible = true;
};

ResourceEstimate with_budget(const ResourceVec& used, const HardwareBudget& hw);

// Per type: sum of IP resources plus the bundle overhead.
ResourceVec bundle_resource(const BundleSpec& bundle);
// Per type: bundle_resource + gamma * res_ctl, checked against the budget.
ResourceEstimate dnn_resource(const BundleSpec& bundle, const CalibrationParams& cal, const HardwareBudget& hw);

struct Segment {
  enum class Kind { repetition, transfer };
  Kind kind = Kind::repetition;
  int repetition = -1;               // index among repetitions, -1 for transfers
  std::vector<std::size_t> layers;  // indices into the graph
  std::string label() const;
};

// Splits the graph into bundle repetitions. Major layers must follow the
// pattern cyclically; bn and act layers ride along with the preceding
// segment; pooling layers between repetitions form transfer segments.
// Throws InputError naming the offending layer otherwise.
std::vector<Segment> decompose(const ir::ModelGraph& graph, const BundleSpec& bundle);

struct SegmentLatency {
  std::string label;
  std::string first_layer;
  std::string last_layer;
  double comp_cycles = 0.0;
  std::int64_t theta = 0;
  double cycles = 0.0;
};

struct LatencyEstimate {
  double cycles = 0.0;
  double ms = 0.0;
  double data_movement_cycles = 0.0;  // phi * Lat_DM
  int repetitions = 0;
  std::vector<SegmentLatency> segments;
};

inline double cycles_to_ms(double cycles, double freq_mhz) { return cycles / (freq_mhz * 1e3); }

// Comp of one segment: each layer is charged the IPs serving its pattern
// entry (transfer segments only use IPs targeting "pool").
double segment_comp(const ir::ModelGraph& graph, const Segment& seg, const BundleSpec& bundle);

// Sum of segment latencies plus phi * Lat_DM.
LatencyEstimate dnn_latency(const ir::ModelGraph& graph, const BundleSpec& bundle, const HardwareBudget& hw,
                            const CalibrationParams& cal, const ir::QuantScheme& scheme);

// Everything a hardware file describes.
struct HwConfig {
  HardwareBudget budget;
  BundleSpec bundle;
  CalibrationParams calibration;
};

// TOML layout: [budget] dsp lut ff bram bw_bytes_per_cycle freq_mhz;
// [[ip]] id lat_cycles layer res.{dsp,lut,ff,bram} tile.{h,w,c_in,c_out};
// [bundle] id alpha beta pattern gamma_overhead.{...};
// [calibration] phi lat_dm gamma res_ctl.{...}.
HwConfig parse_hw_config(std::string_view toml_text, std::string_view source = "<string>");
HwConfig load_hw_config(const std::filesystem::path& path);

}  // namespace coforge::accel
