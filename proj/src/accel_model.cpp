#include "coforge/accel_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "coforge/error.hpp"

namespace coforge::accel {

namespace {

bool is_minor(ir::LayerKind k) { return k == ir::LayerKind::bn || k == ir::LayerKind::act; }

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t packed_bytes(std::int64_t elements, int bits) {
  return ceil_div(elements * bits, 8);
}

void check_resources(const ResourceVec& r, const std::string& what, bool strictly_positive) {
  for (std::size_t t = 0; t < kResourceTypes; ++t) {
    const bool ok = std::isfinite(r[t]) && (strictly_positive ? r[t] > 0.0 : r[t] >= 0.0);
    if (!ok)
      throw InputError(what + "." + std::string(kResourceNames[t]) + " must be " +
                       (strictly_positive ? "positive" : "non-negative"));
  }
}

}  // namespace

PatternEntry parse_pattern_entry(std::string_view e) {
  std::size_t split = 0;
  while (split < e.size() && std::isalpha(static_cast<unsigned char>(e[split]))) ++split;
  const auto name = e.substr(0, split);
  const auto digits = e.substr(split);
  PatternEntry out;
  try {
    out.kind = ir::parse_layer_kind(name);
  } catch (const InputError&) {
    throw InputError("bundle pattern entry '" + std::string(e) + "' does not name a layer kind");
  }
  if (!ir::is_weighted(out.kind) && out.kind != ir::LayerKind::pool)
    throw InputError("bundle pattern entry '" + std::string(e) + "': only conv, dwconv, fc and pool can appear");
  if (!digits.empty()) {
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
        digits.size() > 2)
      throw InputError("bundle pattern entry '" + std::string(e) + "' has a malformed kernel size");
    out.kernel = std::stoi(std::string(digits));
    if (out.kernel < 1) throw InputError("bundle pattern entry '" + std::string(e) + "' has kernel 0");
  }
  return out;
}

void validate(const IpSpec& ip) {
  const std::string where = "ip '" + ip.id + "'";
  if (ip.id.empty()) throw InputError("ip without an id");
  if (!(ip.lat_cycles > 0.0) || !std::isfinite(ip.lat_cycles))
    throw InputError(where + ": lat_cycles must be positive");
  if (ip.tile.h < 1 || ip.tile.w < 1 || ip.tile.c_in < 1 || ip.tile.c_out < 1)
    throw InputError(where + ": tile dimensions must be at least 1");
  check_resources(ip.res, where + " res", false);
}

void validate(const BundleSpec& bundle) {
  const std::string where = "bundle '" + bundle.id + "'";
  if (bundle.ips.empty()) throw InputError(where + " has no IPs");
  if (bundle.pattern.empty()) throw InputError(where + " has an empty pattern");
  for (const auto& e : bundle.pattern) parse_pattern_entry(e);
  if (!(bundle.alpha > 0.0 && bundle.alpha <= 1.0)) throw InputError(where + ": alpha must lie in (0, 1]");
  if (!(bundle.beta > 0.0 && bundle.beta <= 1.0)) throw InputError(where + ": beta must lie in (0, 1]");
  check_resources(bundle.gamma_overhead, where + " gamma_overhead", false);
  for (const auto& ip : bundle.ips) {
    validate(ip);
    const auto target = resolved_target(ip, bundle);
    if (target != "pool" && std::find(bundle.pattern.begin(), bundle.pattern.end(), target) == bundle.pattern.end())
      throw InputError("ip '" + ip.id + "' targets '" + target + "', which is not in the pattern of " + where);
  }
}

void validate(const HardwareBudget& hw) {
  check_resources(hw.totals, "budget", true);
  if (!(hw.bw_bytes_per_cycle > 0.0) || !std::isfinite(hw.bw_bytes_per_cycle))
    throw InputError("budget.bw_bytes_per_cycle must be positive");
  if (!(hw.freq_mhz > 0.0) || !std::isfinite(hw.freq_mhz)) throw InputError("budget.freq_mhz must be positive");
}

void validate(const CalibrationParams& cal) {
  for (double v : {cal.phi, cal.lat_dm, cal.gamma})
    if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("calibration phi, lat_dm and gamma must be non-negative");
  check_resources(cal.res_ctl, "calibration res_ctl", false);
}

bool entry_matches(std::string_view entry, const ir::LayerSpec& l) {
  const auto e = parse_pattern_entry(entry);
  return e.kind == l.kind && (e.kernel == 0 || e.kernel == l.kernel);
}

std::string resolved_target(const IpSpec& ip, const BundleSpec& bundle) {
  if (!ip.layer.empty()) return ip.layer;
  return bundle.pattern.empty() ? std::string("conv") : bundle.pattern.front();
}

std::vector<const IpSpec*> ips_for_layer(const BundleSpec& bundle, const ir::LayerSpec& l) {
  std::vector<const IpSpec*> out;
  if (is_minor(l.kind)) return out;
  for (const auto& ip : bundle.ips)
    if (entry_matches(resolved_target(ip, bundle), l)) out.push_back(&ip);
  return out;
}

std::int64_t reuse_count(const ir::LayerSpec& layer, const IpSpec& ip) {
  return ceil_div(layer.out_h(), ip.tile.h) * ceil_div(layer.out_w(), ip.tile.w) *
         ceil_div(layer.fan_in_channels(), ip.tile.c_in) * ceil_div(layer.out_channels, ip.tile.c_out);
}

double comp_latency(const ir::LayerSpec& layer, const BundleSpec& bundle) {
  double comp = 0.0;
  for (const auto& ip : bundle.ips) comp += static_cast<double>(reuse_count(layer, ip)) * ip.lat_cycles;
  return comp;
}

std::int64_t theta_bytes(const std::vector<const ir::LayerSpec*>& run, const ir::QuantScheme& scheme) {
  if (run.empty()) return 0;
  std::int64_t bytes = packed_bytes(run.front()->input_elements(), scheme.act_bits) +
                       packed_bytes(run.back()->output_elements(), scheme.act_bits);
  for (const auto* l : run)
    if (ir::is_weighted(l->kind)) bytes += packed_bytes(l->weight_count(), scheme.bits_for(l->quant_group));
  return bytes;
}

std::int64_t theta_bytes(const ir::LayerSpec& layer, const ir::QuantScheme& scheme) {
  return theta_bytes(std::vector<const ir::LayerSpec*>{&layer}, scheme);
}

double bundle_latency(double comp_cycles, double theta, const BundleSpec& bundle, const HardwareBudget& hw) {
  return bundle.alpha * comp_cycles + bundle.beta * theta / hw.bw_bytes_per_cycle;
}

double bundle_latency(const ir::LayerSpec& layer, const BundleSpec& bundle, const HardwareBudget& hw,
                      const ir::QuantScheme& scheme) {
  return bundle_latency(comp_latency(layer, bundle), static_cast<double>(theta_bytes(layer, scheme)), bundle, hw);
}

ResourceEstimate with_budget(const ResourceVec& used, const HardwareBudget& hw) {
  ResourceEstimate r;
  r.used = used;
  for (std::size_t t = 0; t < kResourceTypes; ++t) {
    r.utilization[t] = hw.totals[t] > 0.0 ? used[t] / hw.totals[t] : 0.0;
    if (hw.totals[t] > 0.0 && used[t] > hw.totals[t]) r.feasible = false;
  }
  return r;
}

ResourceVec bundle_resource(const BundleSpec& bundle) {
  ResourceVec total = bundle.gamma_overhead;
  for (const auto& ip : bundle.ips)
    for (std::size_t t = 0; t < kResourceTypes; ++t) total[t] += ip.res[t];
  return total;
}

ResourceEstimate dnn_resource(const BundleSpec& bundle, const CalibrationParams& cal, const HardwareBudget& hw) {
  auto used = bundle_resource(bundle);
  for (std::size_t t = 0; t < kResourceTypes; ++t) used[t] += cal.gamma * cal.res_ctl[t];
  return with_budget(used, hw);
}

std::string Segment::label() const {
  return kind == Kind::repetition ? "rep" + std::to_string(repetition) : "transfer";
}

std::vector<Segment> decompose(const ir::ModelGraph& graph, const BundleSpec& bundle) {
  if (bundle.pattern.empty()) throw InputError("bundle '" + bundle.id + "' has an empty pattern");
  std::vector<Segment> segs;
  std::size_t pos = 0;
  int reps = 0;
  const auto describe = [](const ir::LayerSpec& l) {
    return "layer '" + l.id + "' (" + std::string(ir::to_string(l.kind)) + " k" + std::to_string(l.kernel) + ")";
  };
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& l = graph.layers[i];
    if (is_minor(l.kind)) {
      if (segs.empty())
        throw InputError(describe(l) + " precedes the first bundle layer of model '" + graph.name + "'");
      segs.back().layers.push_back(i);
      continue;
    }
    const bool fits = entry_matches(bundle.pattern[pos], l);
    if (l.kind == ir::LayerKind::pool && !fits) {
      if (pos != 0)
        throw InputError(describe(l) + " interrupts a bundle repetition; expected '" + bundle.pattern[pos] + "'");
      segs.push_back(Segment{Segment::Kind::transfer, -1, {i}});
      continue;
    }
    if (!fits)
      throw InputError(describe(l) + " does not match bundle pattern entry '" + bundle.pattern[pos] +
                       "' of bundle '" + bundle.id + "'");
    if (pos == 0) segs.push_back(Segment{Segment::Kind::repetition, reps++, {}});
    segs.back().layers.push_back(i);
    pos = (pos + 1) % bundle.pattern.size();
  }
  if (pos != 0)
    throw InputError("model '" + graph.name + "' ends in the middle of a bundle repetition (after " +
                     describe(graph.layers.back()) + ")");
  if (reps == 0) throw InputError("model '" + graph.name + "' contains no bundle repetition");
  return segs;
}

double segment_comp(const ir::ModelGraph& graph, const Segment& seg, const BundleSpec& bundle) {
  double comp = 0.0;
  for (auto i : seg.layers) {
    const auto& l = graph.layers[i];
    for (const auto* ip : ips_for_layer(bundle, l)) comp += static_cast<double>(reuse_count(l, *ip)) * ip->lat_cycles;
  }
  return comp;
}

LatencyEstimate dnn_latency(const ir::ModelGraph& graph, const BundleSpec& bundle, const HardwareBudget& hw,
                            const CalibrationParams& cal, const ir::QuantScheme& scheme) {
  LatencyEstimate est;
  for (const auto& seg : decompose(graph, bundle)) {
    std::vector<const ir::LayerSpec*> run;
    for (auto i : seg.layers) run.push_back(&graph.layers[i]);
    SegmentLatency s;
    s.label = seg.label();
    s.first_layer = run.front()->id;
    s.last_layer = run.back()->id;
    s.comp_cycles = segment_comp(graph, seg, bundle);
    s.theta = theta_bytes(run, scheme);
    s.cycles = bundle_latency(s.comp_cycles, static_cast<double>(s.theta), bundle, hw);
    est.cycles += s.cycles;
    est.repetitions += seg.kind == Segment::Kind::repetition;
    est.segments.push_back(std::move(s));
  }
  est.data_movement_cycles = cal.phi * cal.lat_dm;
  est.cycles += est.data_movement_cycles;
  est.ms = cycles_to_ms(est.cycles, hw.freq_mhz);
  return est;
}

}  // namespace coforge::accel
