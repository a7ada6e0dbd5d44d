#include "coforge/model_ir.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "coforge/error.hpp"

namespace coforge::ir {

using nlohmann::json;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::dwconv: return "dwconv";
    case LayerKind::fc: return "fc";
    case LayerKind::pool: return "pool";
    case LayerKind::bn: return "bn";
    case LayerKind::act: return "act";
  }
  return "?";
}

std::string_view to_string(QuantGroup group) {
  switch (group) {
    case QuantGroup::first_conv: return "first_conv";
    case QuantGroup::mid_conv: return "mid_conv";
    case QuantGroup::mid_fc: return "mid_fc";
    case QuantGroup::last_fc: return "last_fc";
    case QuantGroup::non_weighted: return "non_weighted";
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::conv, LayerKind::dwconv, LayerKind::fc, LayerKind::pool, LayerKind::bn, LayerKind::act})
    if (to_string(k) == s) return k;
  throw InputError("unknown layer kind '" + std::string(s) + "'");
}

QuantGroup parse_quant_group(std::string_view s) {
  for (auto g : {QuantGroup::first_conv, QuantGroup::mid_conv, QuantGroup::mid_fc, QuantGroup::last_fc,
                 QuantGroup::non_weighted})
    if (to_string(g) == s) return g;
  throw InputError("unknown quant group '" + std::string(s) + "'");
}

int conv_out_dim(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0 || stride < 1) return 0;
  return span / stride + 1;
}

int default_padding(LayerKind kind, int kernel) {
  return (kind == LayerKind::conv || kind == LayerKind::dwconv) ? kernel / 2 : 0;
}

int LayerSpec::out_h() const {
  switch (kind) {
    case LayerKind::fc: return 1;
    case LayerKind::bn:
    case LayerKind::act: return input_h;
    default: return conv_out_dim(input_h, kernel, stride, padding);
  }
}

int LayerSpec::out_w() const {
  switch (kind) {
    case LayerKind::fc: return 1;
    case LayerKind::bn:
    case LayerKind::act: return input_w;
    default: return conv_out_dim(input_w, kernel, stride, padding);
  }
}

std::int64_t LayerSpec::fan_in_channels() const {
  return kind == LayerKind::fc ? input_elements() : std::int64_t{in_channels};
}

std::int64_t LayerSpec::weight_count() const {
  const std::int64_t k2 = std::int64_t{kernel} * kernel;
  switch (kind) {
    case LayerKind::conv: return std::int64_t{in_channels} * out_channels * k2;
    case LayerKind::dwconv: return std::int64_t{out_channels} * k2;
    case LayerKind::fc: return input_elements() * out_channels;
    default: return 0;
  }
}

std::int64_t LayerSpec::macs() const {
  const std::int64_t k2 = std::int64_t{kernel} * kernel;
  const std::int64_t out_px = std::int64_t{out_h()} * out_w();
  switch (kind) {
    case LayerKind::conv: return out_px * out_channels * in_channels * k2;
    case LayerKind::dwconv: return out_px * out_channels * k2;
    case LayerKind::fc: return input_elements() * out_channels;
    default: return 0;
  }
}

const LayerSpec& ModelGraph::layer(std::string_view id) const {
  for (const auto& l : layers)
    if (l.id == id) return l;
  throw InputError("no layer '" + std::string(id) + "' in model '" + name + "'");
}

std::vector<const LayerSpec*> ModelGraph::weighted_layers() const {
  std::vector<const LayerSpec*> out;
  for (const auto& l : layers)
    if (is_weighted(l.kind)) out.push_back(&l);
  return out;
}

namespace {

std::string dims(int h, int w, int c) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

void validate_layer(const LayerSpec& l) {
  const std::string where = "layer '" + l.id + "'";
  if (l.id.empty()) throw InputError("layer with empty id");
  if (l.input_h < 1 || l.input_w < 1 || l.in_channels < 1 || l.out_channels < 1)
    throw InputError(where + ": dimensions must be positive");
  if (l.kernel < 1 || l.stride < 1) throw InputError(where + ": kernel and stride must be >= 1");
  if (l.padding < 0 || (l.padding > 0 && l.padding >= l.kernel))
    throw InputError(where + ": padding must lie in [0, kernel)");
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::dwconv:
    case LayerKind::pool:
      if (l.kernel < l.stride) throw InputError(where + ": kernel must be >= stride");
      break;
    case LayerKind::fc:
      if (l.kernel != 1 || l.stride != 1 || l.padding != 0)
        throw InputError(where + ": fc layers require kernel=1, stride=1, padding=0");
      break;
    case LayerKind::bn:
    case LayerKind::act:
      if (l.kernel != 1 || l.stride != 1 || l.padding != 0)
        throw InputError(where + ": " + std::string(to_string(l.kind)) + " layers take no kernel");
      break;
  }
  if ((l.kind == LayerKind::dwconv || l.kind == LayerKind::pool || l.kind == LayerKind::bn ||
       l.kind == LayerKind::act) &&
      l.out_channels != l.in_channels)
    throw InputError(where + ": " + std::string(to_string(l.kind)) + " layers preserve the channel count");
  if (l.out_h() < 1 || l.out_w() < 1)
    throw InputError(where + ": window does not fit input " + dims(l.input_h, l.input_w, l.in_channels));

  const bool weighted = is_weighted(l.kind);
  if (weighted && l.quant_group == QuantGroup::non_weighted)
    throw InputError(where + ": weighted layer needs a quant group");
  if (!weighted && l.quant_group != QuantGroup::non_weighted)
    throw InputError(where + ": only conv/dwconv/fc layers carry weights");
  if (l.quant_group == QuantGroup::mid_conv && l.kind == LayerKind::fc)
    throw InputError(where + ": fc layer cannot be in group mid_conv");
  if (l.quant_group == QuantGroup::mid_fc && l.kind != LayerKind::fc)
    throw InputError(where + ": only fc layers can be in group mid_fc");
}

}  // namespace

void validate(const ModelGraph& graph) {
  if (graph.layers.empty()) throw InputError("model '" + graph.name + "' has no layers");
  std::set<std::string> ids;
  for (const auto& l : graph.layers) {
    validate_layer(l);
    if (!ids.insert(l.id).second) throw InputError("duplicate layer id '" + l.id + "'");
  }
  for (std::size_t i = 0; i + 1 < graph.layers.size(); ++i) {
    const auto& a = graph.layers[i];
    const auto& b = graph.layers[i + 1];
    if (a.out_h() != b.input_h || a.out_w() != b.input_w || a.out_channels != b.in_channels)
      throw ShapeError("shape mismatch: layer '" + a.id + "' produces " + dims(a.out_h(), a.out_w(), a.out_channels) +
                       " but layer '" + b.id + "' expects " + dims(b.input_h, b.input_w, b.in_channels));
  }

  const auto weighted = graph.weighted_layers();
  if (weighted.empty()) return;
  if (weighted.size() < 2)
    throw InputError("model '" + graph.name + "' has a single weighted layer; first_conv and last_fc need two");
  int first = 0, last = 0;
  for (const auto* l : weighted) {
    first += l->quant_group == QuantGroup::first_conv;
    last += l->quant_group == QuantGroup::last_fc;
  }
  if (first != 1 || last != 1)
    throw InputError("model '" + graph.name + "' needs exactly one first_conv and one last_fc layer");
  if (weighted.front()->quant_group != QuantGroup::first_conv)
    throw InputError("layer '" + weighted.front()->id + "' is the first weighted layer but not first_conv");
  if (weighted.back()->quant_group != QuantGroup::last_fc)
    throw InputError("layer '" + weighted.back()->id + "' is the last weighted layer but not last_fc");
}

void assign_quant_groups(ModelGraph& graph, const std::vector<bool>& explicit_group) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
    if (is_weighted(graph.layers[i].kind)) idx.push_back(i);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    auto& l = graph.layers[idx[n]];
    if (idx[n] < explicit_group.size() && explicit_group[idx[n]]) continue;
    if (n == 0)
      l.quant_group = QuantGroup::first_conv;
    else if (n + 1 == idx.size())
      l.quant_group = QuantGroup::last_fc;
    else
      l.quant_group = l.kind == LayerKind::fc ? QuantGroup::mid_fc : QuantGroup::mid_conv;
  }
}

namespace {

int get_int(const json& j, const char* key, int fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw InputError(where + ": '" + key + "' must be an integer");
  return v.get<int>();
}

}  // namespace

ModelGraph parse_model(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("model document must be a JSON object");
  ModelGraph g;
  g.name = doc.value("name", std::string{});
  if (g.name.empty()) throw InputError("model document needs a 'name'");
  if (doc.contains("bundle_template")) g.bundle_template = doc.at("bundle_template").get<std::string>();
  if (!doc.contains("layers") || !doc.at("layers").is_array() || doc.at("layers").empty())
    throw InputError("model '" + g.name + "' needs a non-empty 'layers' array");

  std::vector<bool> explicit_group;
  const LayerSpec* prev = nullptr;
  for (const auto& jl : doc.at("layers")) {
    LayerSpec l;
    if (!jl.is_object() || !jl.contains("id") || !jl.at("id").is_string())
      throw InputError("model '" + g.name + "': every layer needs a string 'id'");
    l.id = jl.at("id").get<std::string>();
    const std::string where = "layer '" + l.id + "'";
    if (!jl.contains("kind")) throw InputError(where + ": missing 'kind'");
    try {
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }

    int h, w, c;
    if (jl.contains("in")) {
      const auto& in = jl.at("in");
      if (!in.is_array() || in.size() != 3 || !in[0].is_number_integer() || !in[1].is_number_integer() ||
          !in[2].is_number_integer())
        throw InputError(where + ": 'in' must be [H, W, C]");
      h = in[0].get<int>();
      w = in[1].get<int>();
      c = in[2].get<int>();
      if (prev && (prev->out_h() != h || prev->out_w() != w || prev->out_channels != c))
        throw ShapeError("shape mismatch: layer '" + prev->id + "' produces " +
                         dims(prev->out_h(), prev->out_w(), prev->out_channels) + " but layer '" + l.id +
                         "' expects " + dims(h, w, c));
    } else if (prev) {
      h = prev->out_h();
      w = prev->out_w();
      c = prev->out_channels;
    } else {
      throw InputError(where + ": the first layer must declare 'in'");
    }
    l.input_h = h;
    l.input_w = w;
    l.in_channels = c;
    l.kernel = get_int(jl, "kernel", 1, where);
    l.stride = get_int(jl, "stride", 1, where);
    l.padding = get_int(jl, "padding", default_padding(l.kind, l.kernel), where);
    const bool channel_changing = l.kind == LayerKind::conv || l.kind == LayerKind::fc;
    if (channel_changing && !jl.contains("out_channels")) throw InputError(where + ": missing 'out_channels'");
    l.out_channels = get_int(jl, "out_channels", c, where);
    const bool has_group = jl.contains("quant_group");
    if (has_group) {
      try {
        l.quant_group = parse_quant_group(jl.at("quant_group").get<std::string>());
      } catch (const InputError& e) {
        throw InputError(where + ": " + e.what());
      }
    }
    explicit_group.push_back(has_group);
    // Group rules are checked once groups are assigned; shapes must hold now
    // so that propagation into the next layer is meaningful.
    auto probe = l;
    probe.quant_group = is_weighted(l.kind) ? QuantGroup::first_conv : QuantGroup::non_weighted;
    validate_layer(probe);
    g.layers.push_back(std::move(l));
    prev = &g.layers.back();
  }
  assign_quant_groups(g, explicit_group);
  validate(g);
  return g;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ModelGraph load_model(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return parse_model(text);
  } catch (const ShapeError& e) {
    throw ShapeError(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string to_json_text(const ModelGraph& graph) {
  json doc;
  doc["name"] = graph.name;
  if (graph.bundle_template) doc["bundle_template"] = *graph.bundle_template;
  doc["layers"] = json::array();
  for (const auto& l : graph.layers) {
    doc["layers"].push_back({{"id", l.id},
                             {"kind", to_string(l.kind)},
                             {"in", {l.input_h, l.input_w, l.in_channels}},
                             {"out_channels", l.out_channels},
                             {"kernel", l.kernel},
                             {"stride", l.stride},
                             {"padding", l.padding},
                             {"quant_group", to_string(l.quant_group)}});
  }
  return doc.dump(2);
}

// --- quantization schemes -------------------------------------------------

int QuantScheme::bits_for(QuantGroup group) const {
  switch (group) {
    case QuantGroup::first_conv: return first_conv_bits;
    case QuantGroup::mid_conv: return mid_conv_bits;
    case QuantGroup::mid_fc: return mid_fc_bits;
    case QuantGroup::last_fc: return last_fc_bits;
    case QuantGroup::non_weighted: return act_bits;
  }
  return act_bits;
}

void validate(const QuantScheme& s) {
  for (int b : {s.act_bits, s.first_conv_bits, s.mid_conv_bits, s.mid_fc_bits, s.last_fc_bits})
    if (b < 1 || b > 32) throw InputError("bitwidth " + std::to_string(b) + " outside 1..32");
}

QuantScheme parse_scheme(std::string_view name) {
  const auto fail = [&](const std::string& why) -> QuantScheme {
    throw InputError("bad scheme '" + std::string(name) + "': " + why);
  };
  const auto last = name.rfind('-');
  if (last == std::string_view::npos || last == 0) return fail("expected <net>-<A>-<D1D2D3D4>");
  const auto mid = name.rfind('-', last - 1);
  if (mid == std::string_view::npos) return fail("expected <net>-<A>-<D1D2D3D4>");
  const auto net = name.substr(0, mid);
  const auto act = name.substr(mid + 1, last - mid - 1);
  const auto weights = name.substr(last + 1);
  if (net.empty()) return fail("empty network name");

  int act_bits = 0;
  const auto [p, ec] = std::from_chars(act.data(), act.data() + act.size(), act_bits);
  if (act.empty() || ec != std::errc{} || p != act.data() + act.size())
    return fail("activation segment '" + std::string(act) + "' is not a decimal bitwidth");
  if (act_bits < 1 || act_bits > 32) return fail("activation segment '" + std::string(act) + "' outside 1..32");

  if (weights.size() != 4)
    return fail("weight segment '" + std::string(weights) + "' must have exactly 4 digits, got " +
                std::to_string(weights.size()));
  int d[4];
  for (int i = 0; i < 4; ++i) {
    const char ch = weights[static_cast<std::size_t>(i)];
    if (ch < '1' || ch > '9')
      return fail("weight segment '" + std::string(weights) + "' has non-digit or zero '" + std::string(1, ch) + "'");
    d[i] = ch - '0';
  }
  return QuantScheme{act_bits, d[0], d[1], d[2], d[3]};
}

std::string format_scheme(const QuantScheme& s, std::string_view net_name) {
  validate(s);
  std::string out(net_name);
  out += '-';
  out += std::to_string(s.act_bits);
  out += '-';
  for (int b : {s.first_conv_bits, s.mid_conv_bits, s.mid_fc_bits, s.last_fc_bits}) {
    if (b > 9) throw InputError("weight bitwidth " + std::to_string(b) + " has no single-digit scheme name");
    out += static_cast<char>('0' + b);
  }
  return out;
}

// --- weight files ------------------------------------------------------------

namespace {
constexpr std::string_view kWeightMagic = "CFW1";
}

void save_weights(const std::filesystem::path& path, std::span<const WeightVector> layers) {
  detail::ByteWriter w;
  w.put_bytes(kWeightMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.layer_id.size()));
    w.put_bytes(l.layer_id);
    w.put<std::uint64_t>(l.values.size());
  }
  for (const auto& l : layers)
    for (double v : l.values) w.put<float>(static_cast<float>(v));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

std::vector<WeightVector> read_weight_file(const std::filesystem::path& path) {
  const auto data = read_file(path);
  detail::ByteReader r(data, path.string());
  if (r.get_bytes(4) != kWeightMagic) throw InputError(path.string() + ": not a weight file (bad magic)");
  const auto count = r.get<std::uint32_t>();
  std::vector<WeightVector> layers(count);
  std::vector<std::uint64_t> sizes(count);
  std::uint64_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    layers[i].layer_id = std::string(r.get_bytes(len));
    sizes[i] = r.get<std::uint64_t>();
    total += sizes[i];
  }
  if (r.remaining() != total * sizeof(float))
    throw InputError(path.string() + ": payload size mismatch: expected " + std::to_string(total) + ", got " +
                     std::to_string(r.remaining() / sizeof(float)) + " elements (" + std::to_string(r.remaining()) +
                     " bytes)");
  for (std::uint32_t i = 0; i < count; ++i) {
    layers[i].values.resize(sizes[i]);
    for (auto& v : layers[i].values) v = static_cast<double>(r.get<float>());
  }
  return layers;
}

WeightMap load_weights(const std::filesystem::path& path, const ModelGraph& graph) {
  auto layers = read_weight_file(path);
  const auto weighted = graph.weighted_layers();
  if (layers.size() != weighted.size())
    throw InputError(path.string() + ": expected " + std::to_string(weighted.size()) + " weighted layers, got " +
                     std::to_string(layers.size()));
  WeightMap out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = *weighted[i];
    if (layers[i].layer_id != spec.id)
      throw InputError(path.string() + ": entry " + std::to_string(i) + " is '" + layers[i].layer_id +
                       "', expected '" + spec.id + "'");
    const auto expected = static_cast<std::size_t>(spec.weight_count());
    if (layers[i].values.size() != expected)
      throw InputError(path.string() + ": layer '" + spec.id + "': expected " + std::to_string(expected) +
                       ", got " + std::to_string(layers[i].values.size()));
    for (double v : layers[i].values)
      if (!std::isfinite(v)) throw InputError(path.string() + ": layer '" + spec.id + "' holds non-finite weights");
    out.emplace(spec.id, std::move(layers[i]));
  }
  return out;
}

}  // namespace coforge::ir
