#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace coforge::ir {

enum class LayerKind { conv, dwconv, fc, pool, bn, act };
enum class QuantGroup { first_conv, mid_conv, mid_fc, last_fc, non_weighted };

std::string_view to_string(LayerKind kind);
std::string_view to_string(QuantGroup group);
LayerKind parse_layer_kind(std::string_view s);
QuantGroup parse_quant_group(std::string_view s);

inline bool is_weighted(LayerKind k) {
  return k == LayerKind::conv || k == LayerKind::dwconv || k == LayerKind::fc;
}

// One layer of a single-path network. Input dims are what the layer sees;
// output dims are derived. For fc layers the input map is flattened, so the
// fan-in is in_h * in_w * in_channels.
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::conv;
  int input_h = 1;
  int input_w = 1;
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  QuantGroup quant_group = QuantGroup::non_weighted;

  int out_h() const;
  int out_w() const;
  // Number of input features seen by each output (N in N*M*K^2).
  std::int64_t fan_in_channels() const;
  // Weight element count: N*M*K^2 for conv, M*K^2 for dwconv, N*M for fc.
  std::int64_t weight_count() const;
  // Multiply-accumulates for one frame.
  std::int64_t macs() const;
  std::int64_t input_elements() const { return std::int64_t{input_h} * input_w * in_channels; }
  std::int64_t output_elements() const { return std::int64_t{out_h()} * out_w() * out_channels; }
};

// floor((in + 2p - k) / s) + 1, or 0 when the window does not fit.
int conv_out_dim(int in, int kernel, int stride, int padding);

// The padding a layer takes when the model file omits it: floor(K/2) for
// convolutions, 0 for everything else.
int default_padding(LayerKind kind, int kernel);

struct ModelGraph {
  std::string name;
  std::vector<LayerSpec> layers;
  std::optional<std::string> bundle_template;

  const LayerSpec& layer(std::string_view id) const;
  std::vector<const LayerSpec*> weighted_layers() const;
};

// Checks per-layer invariants, shape compatibility between consecutive
// layers, id uniqueness and the quant-group rules. Throws InputError.
void validate(const ModelGraph& graph);

// Assigns quant groups to weighted layers that are missing one: the first
// weighted layer is first_conv, the last is last_fc, the rest mid_conv or
// mid_fc by kind.
void assign_quant_groups(ModelGraph& graph, const std::vector<bool>& explicit_group);

// Builds a graph from a model document, propagating shapes from the first
// layer's input and validating the result.
ModelGraph parse_model(std::string_view json_text);
ModelGraph load_model(const std::filesystem::path& path);
// Serialises with every field explicit (propagated shapes included).
std::string to_json_text(const ModelGraph& graph);

// Hybrid bitwidth assignment, written as <net>-<A>-<D1><D2><D3><D4>.
struct QuantScheme {
  int act_bits = 32;
  int first_conv_bits = 32;
  int mid_conv_bits = 32;
  int mid_fc_bits = 32;
  int last_fc_bits = 32;

  int bits_for(QuantGroup group) const;
  static QuantScheme uniform(int bits) { return {bits, bits, bits, bits, bits}; }
  bool operator==(const QuantScheme&) const = default;
};

void validate(const QuantScheme& scheme);
QuantScheme parse_scheme(std::string_view name);
// Inverse of parse_scheme; weight bitwidths must be single digits.
std::string format_scheme(const QuantScheme& scheme, std::string_view net_name);

struct WeightVector {
  std::string layer_id;
  std::vector<double> values;
};

using WeightMap = std::map<std::string, WeightVector>;

// Weight file: "CFW1", u32 layer count, then per layer
// (u32 id length, id bytes, u64 element count), then the f32 payloads in
// header order. All integers little-endian. Values are stored as f32.
void save_weights(const std::filesystem::path& path, std::span<const WeightVector> layers);
std::vector<WeightVector> read_weight_file(const std::filesystem::path& path);
// Reads a weight file and checks it against the weighted layers of `graph`.
WeightMap load_weights(const std::filesystem::path& path, const ModelGraph& graph);

}  // namespace coforge::ir
