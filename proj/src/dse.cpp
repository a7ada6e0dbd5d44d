#include "coforge/dse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "coforge/error.hpp"

namespace coforge::dse {

double expansion_factor(int exponent) { return std::pow(kExpansionStep, exponent); }

std::string Config::describe() const {
  std::ostringstream os;
  os << bundle_id << " n=" << n << " ds=[";
  for (std::size_t i = 0; i < downsample.size(); ++i) os << (i ? "," : "") << downsample[i];
  os << "] exp=[";
  for (std::size_t i = 0; i < expansion_exp.size(); ++i) os << (i ? "," : "") << expansion_exp[i];
  os << "]";
  return os.str();
}

void validate(const SearchSpace& s) {
  if (s.input_h < 1 || s.input_w < 1 || s.input_c < 1) throw InputError("search space input dims must be positive");
  if (s.base_channels < 1) throw InputError("search space base_channels must be positive");
  if (s.n_min < 1 || s.n_max < s.n_min) throw InputError("search space needs 1 <= n_min <= n_max");
  ir::validate(s.scheme);
  accel::validate(s.hw.bundle);
  accel::validate(s.hw.budget);
  accel::validate(s.hw.calibration);
}

void validate(const Config& c, const SearchSpace& space) {
  const std::string where = "config " + c.describe();
  if (c.n < space.n_min || c.n > space.n_max)
    throw InputError(where + ": n outside [" + std::to_string(space.n_min) + ", " + std::to_string(space.n_max) + "]");
  if (static_cast<int>(c.expansion_exp.size()) != c.n)
    throw InputError(where + ": needs one expansion factor per slot");
  for (int k : c.expansion_exp)
    if (k < kMinExpansionExp || k > kMaxExpansionExp)
      throw InputError(where + ": expansion exponent outside [" + std::to_string(kMinExpansionExp) + ", " +
                       std::to_string(kMaxExpansionExp) + "]");
  for (std::size_t i = 0; i < c.downsample.size(); ++i) {
    const int d = c.downsample[i];
    if (d < 0 || d >= c.n) throw InputError(where + ": down-sampling position " + std::to_string(d) + " >= n");
    if (i > 0 && c.downsample[i - 1] >= d) throw InputError(where + ": down-sampling positions must be sorted and unique");
  }
}

std::optional<ir::ModelGraph> build_graph(const SearchSpace& space, const Config& c) {
  using ir::LayerKind;
  ir::ModelGraph g;
  g.name = space.name;
  g.bundle_template = space.hw.bundle.id;
  int h = space.input_h, w = space.input_w, ch = space.input_c;
  const auto push = [&](ir::LayerSpec l) {
    l.input_h = h;
    l.input_w = w;
    l.in_channels = ch;
    if (l.out_h() < 1 || l.out_w() < 1) return false;
    h = l.out_h();
    w = l.out_w();
    ch = l.out_channels;
    g.layers.push_back(std::move(l));
    return true;
  };
  for (int s = 0; s < c.n; ++s) {
    const int width =
        std::max(1, static_cast<int>(std::lround(space.base_channels * expansion_factor(c.expansion_exp[s]))));
    for (std::size_t j = 0; j < space.hw.bundle.pattern.size(); ++j) {
      const auto e = accel::parse_pattern_entry(space.hw.bundle.pattern[j]);
      ir::LayerSpec l;
      l.id = "s" + std::to_string(s) + "_" + std::to_string(j) + "_" + std::string(ir::to_string(e.kind));
      l.kind = e.kind;
      switch (e.kind) {
        case LayerKind::conv:
          l.kernel = e.kernel ? e.kernel : 3;
          l.out_channels = width;
          break;
        case LayerKind::dwconv:
          l.kernel = e.kernel ? e.kernel : 3;
          l.out_channels = ch;
          break;
        case LayerKind::fc:
          l.kernel = 1;
          l.out_channels = width;
          break;
        default:  // pool
          l.kernel = e.kernel ? e.kernel : 2;
          l.out_channels = ch;
          break;
      }
      l.stride = e.kind == LayerKind::pool ? l.kernel : 1;
      l.padding = ir::default_padding(l.kind, l.kernel);
      if (!push(std::move(l))) return std::nullopt;
    }
    if (std::binary_search(c.downsample.begin(), c.downsample.end(), s)) {
      ir::LayerSpec p;
      p.id = "s" + std::to_string(s) + "_down";
      p.kind = LayerKind::pool;
      p.kernel = 2;
      p.stride = 2;
      p.out_channels = ch;
      if (!push(std::move(p))) return std::nullopt;
    }
  }
  std::vector<ir::LayerSpec*> weighted;
  for (auto& l : g.layers)
    if (ir::is_weighted(l.kind)) weighted.push_back(&l);
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    auto& l = *weighted[i];
    if (i == 0)
      l.quant_group = ir::QuantGroup::first_conv;
    else if (i + 1 == weighted.size())
      l.quant_group = ir::QuantGroup::last_fc;
    else
      l.quant_group = l.kind == LayerKind::fc ? ir::QuantGroup::mid_fc : ir::QuantGroup::mid_conv;
  }
  return g;
}

double total_gops(const ir::ModelGraph& graph) {
  double macs = 0.0;
  for (const auto& l : graph.layers) macs += static_cast<double>(l.macs());
  return 2.0 * macs / 1e9;
}

AccuracyOracle gops_oracle(double tau) {
  if (!(tau > 0.0)) throw InputError("gops oracle tau must be positive");
  return [tau](const Config&, const ir::ModelGraph& g) { return 1.0 - std::exp(-total_gops(g) / tau); };
}

double planted_distance(const Config& a, const Config& b) {
  double d = 10.0 * std::abs(a.n - b.n);
  const std::size_t shared = std::min(a.expansion_exp.size(), b.expansion_exp.size());
  for (std::size_t i = 0; i < shared; ++i) d += std::abs(a.expansion_exp[i] - b.expansion_exp[i]);
  std::vector<int> sym;
  std::set_symmetric_difference(a.downsample.begin(), a.downsample.end(), b.downsample.begin(), b.downsample.end(),
                                std::back_inserter(sym));
  return d + static_cast<double>(sym.size());
}

AccuracyOracle planted_oracle(Config optimum) {
  return [opt = std::move(optimum)](const Config& c, const ir::ModelGraph&) {
    return 1.0 / (1.0 + planted_distance(c, opt));
  };
}

DesignPoint evaluate(const SearchSpace& space, const Config& c, const AccuracyOracle& oracle,
                     const SearchConstraints& limits) {
  validate(c, space);
  DesignPoint p;
  p.config = c;
  p.config.bundle_id = space.hw.bundle.id;
  p.resource = accel::dnn_resource(space.hw.bundle, space.hw.calibration, limits.budget);
  p.latency = std::numeric_limits<double>::infinity();
  const auto g = build_graph(space, p.config);
  if (!g) return p;
  p.buildable = true;
  p.latency = accel::dnn_latency(*g, space.hw.bundle, space.hw.budget, space.hw.calibration, space.scheme).cycles;
  p.gops = total_gops(*g);
  p.accuracy = oracle(p.config, *g);
  if (!(p.accuracy >= 0.0 && p.accuracy <= 1.0))
    throw InputError("accuracy oracle returned " + std::to_string(p.accuracy) + " for " + c.describe() +
                     "; expected a value in [0, 1]");
  p.feasible = p.latency <= limits.latency_target && p.resource.feasible;
  return p;
}

CostAxis parse_cost_axis(std::string_view s) {
  if (s == "latency") return CostAxis::latency;
  if (s == "dsp") return CostAxis::dsp;
  if (s == "lut") return CostAxis::lut;
  if (s == "ff") return CostAxis::ff;
  if (s == "bram") return CostAxis::bram;
  throw InputError("unknown cost axis '" + std::string(s) + "' (latency, dsp, lut, ff, bram)");
}

std::string_view to_string(CostAxis axis) {
  switch (axis) {
    case CostAxis::latency: return "latency";
    case CostAxis::dsp: return "dsp";
    case CostAxis::lut: return "lut";
    case CostAxis::ff: return "ff";
    case CostAxis::bram: return "bram";
  }
  return "latency";
}

double cost_of(const DesignPoint& p, CostAxis axis) {
  switch (axis) {
    case CostAxis::latency: return p.latency;
    case CostAxis::dsp: return p.resource.used[accel::DSP];
    case CostAxis::lut: return p.resource.used[accel::LUT];
    case CostAxis::ff: return p.resource.used[accel::FF];
    case CostAxis::bram: return p.resource.used[accel::BRAM];
  }
  return p.latency;
}

std::vector<std::size_t> pareto_indices(std::span<const double> accuracy, std::span<const double> cost) {
  if (accuracy.size() != cost.size()) throw InputError("pareto: accuracy and cost lists differ in length");
  for (std::size_t i = 0; i < accuracy.size(); ++i)
    if (std::isnan(accuracy[i]) || std::isnan(cost[i])) throw InputError("pareto: NaN objective");
  std::vector<std::size_t> order(accuracy.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cost[a] != cost[b]) return cost[a] < cost[b];
    return accuracy[a] > accuracy[b];
  });
  // Sweep groups of equal cost. A point survives when it is the most
  // accurate of its group and beats everything strictly cheaper.
  std::vector<std::size_t> keep;
  double best_cheaper = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < order.size();) {
    std::size_t end = g;
    while (end < order.size() && cost[order[end]] == cost[order[g]]) ++end;
    const double top = accuracy[order[g]];
    if (top > best_cheaper)
      for (std::size_t i = g; i < end && accuracy[order[i]] == top; ++i) keep.push_back(order[i]);
    best_cheaper = std::max(best_cheaper, top);
    g = end;
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

std::vector<DesignPoint> pareto_filter(const std::vector<DesignPoint>& points, CostAxis axis) {
  std::vector<double> acc, cost;
  for (const auto& p : points) {
    acc.push_back(p.accuracy);
    cost.push_back(cost_of(p, axis));
  }
  std::vector<DesignPoint> out;
  for (auto i : pareto_indices(acc, cost)) out.push_back(points[i]);
  return out;
}

namespace {

Config random_config(const SearchSpace& space, Rng& rng) {
  Config c;
  c.bundle_id = space.hw.bundle.id;
  c.n = static_cast<int>(rng.uniform_int(space.n_min, space.n_max));
  for (int s = 0; s < c.n; ++s) {
    if (rng.uniform() < 0.3) c.downsample.push_back(s);
    c.expansion_exp.push_back(static_cast<int>(rng.uniform_int(kMinExpansionExp, kMaxExpansionExp)));
  }
  return c;
}

void trim(Config& c) {
  c.expansion_exp.resize(c.n);
  std::erase_if(c.downsample, [&](int d) { return d >= c.n; });
}

// One repair round; false when nothing is left to shrink.
bool repair(Config& c, const DesignPoint& p, const SearchSpace& space) {
  if (!p.buildable && !c.downsample.empty()) {
    c.downsample.pop_back();
    return true;
  }
  bool shrunk = false;
  for (auto& k : c.expansion_exp)
    if (k > kMinExpansionExp) {
      --k;
      shrunk = true;
    }
  if (shrunk) return true;
  if (c.n > space.n_min) {
    --c.n;
    trim(c);
    return true;
  }
  return false;
}

}  // namespace

InitialResult build_initial_dnns(const SearchSpace& space, const SearchConstraints& limits,
                                 const AccuracyOracle& oracle, int k, std::uint64_t seed, int jobs) {
  if (k < 1) throw InputError("build_initial_dnns needs k >= 1");
  if (!(limits.latency_target >= 0.0)) throw InputError("latency target must be non-negative");
  validate(space);
  InitialResult out;
  out.points.resize(static_cast<std::size_t>(k));
  parallel_for(out.points.size(), jobs, [&](std::size_t i) {
    Rng rng(derive_seed(seed, "init/" + std::to_string(i)));
    Config c = random_config(space, rng);
    DesignPoint p = evaluate(space, c, oracle, limits);
    for (int round = 0; round < kMaxRepairRounds && !p.feasible && p.resource.feasible; ++round) {
      if (!repair(c, p, space)) break;
      p = evaluate(space, c, oracle, limits);
    }
    out.points[i] = std::move(p);
  });
  for (const auto& p : out.points) out.feasible += p.feasible;
  if (out.feasible == 0) {
    std::ostringstream os;
    const auto& r = out.points.front().resource;
    if (!r.feasible) {
      os << "bundle '" << space.hw.bundle.id << "' exceeds the resource budget (";
      for (std::size_t t = 0; t < accel::kResourceTypes; ++t)
        os << (t ? ", " : "") << accel::kResourceNames[t] << " " << r.used[t] << "/" << limits.budget.totals[t];
      os << ")";
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : out.points) best = std::min(best, p.latency);
      os << "no initial network meets the latency target of " << limits.latency_target
         << " cycles; the fastest reached " << best << " cycles after repair";
    }
    out.diagnostic = os.str();
  }
  return out;
}

std::string_view to_string(Coordinate c) {
  switch (c) {
    case Coordinate::replication: return "replication";
    case Coordinate::downsample: return "downsample";
    case Coordinate::expansion: return "expansion";
  }
  return "replication";
}

namespace {

Move replication_move(const Config& c, int delta) {
  Move m{Coordinate::replication, delta > 0 ? "n+1" : "n-1", c};
  auto& r = m.result;
  r.n += delta;
  if (delta > 0)
    r.expansion_exp.push_back(c.expansion_exp.empty() ? 0 : c.expansion_exp.back());
  else
    trim(r);
  return m;
}

Move toggle_move(const Config& c, int pos) {
  Move m{Coordinate::downsample, "toggle " + std::to_string(pos), c};
  auto& ds = m.result.downsample;
  const auto it = std::lower_bound(ds.begin(), ds.end(), pos);
  if (it != ds.end() && *it == pos)
    ds.erase(it);
  else
    ds.insert(it, pos);
  return m;
}

std::optional<Move> shift_move(const Config& c, std::size_t which, int delta) {
  const int from = c.downsample[which];
  const int to = from + delta;
  if (to < 0 || to >= c.n || std::binary_search(c.downsample.begin(), c.downsample.end(), to)) return std::nullopt;
  Move m{Coordinate::downsample, "shift " + std::to_string(from) + "->" + std::to_string(to), c};
  auto& ds = m.result.downsample;
  ds[which] = to;
  std::sort(ds.begin(), ds.end());
  return m;
}

std::optional<Move> expansion_move(const Config& c, int slot, int delta) {
  const int k = c.expansion_exp[slot] + delta;
  if (k < kMinExpansionExp || k > kMaxExpansionExp) return std::nullopt;
  Move m{Coordinate::expansion, (delta > 0 ? "widen " : "narrow ") + std::to_string(slot), c};
  m.result.expansion_exp[slot] = k;
  return m;
}

}  // namespace

std::vector<Move> enumerate_moves(const Config& c, const SearchSpace& space) {
  std::vector<Move> out;
  if (c.n + 1 <= space.n_max) out.push_back(replication_move(c, +1));
  if (c.n - 1 >= space.n_min) out.push_back(replication_move(c, -1));
  for (int p = 0; p < c.n; ++p) out.push_back(toggle_move(c, p));
  for (std::size_t i = 0; i < c.downsample.size(); ++i)
    for (int d : {-1, +1})
      if (auto m = shift_move(c, i, d)) out.push_back(std::move(*m));
  for (int s = 0; s < c.n; ++s)
    for (int d : {-1, +1})
      if (auto m = expansion_move(c, s, d)) out.push_back(std::move(*m));
  return out;
}

std::optional<Move> random_move(const Config& c, const SearchSpace& space, Rng& rng) {
  const auto coord = static_cast<Coordinate>(rng.uniform_int(0, 2));
  switch (coord) {
    case Coordinate::replication: {
      const int delta = rng.coin() ? 1 : -1;
      if (c.n + delta < space.n_min || c.n + delta > space.n_max) return std::nullopt;
      return replication_move(c, delta);
    }
    case Coordinate::downsample: {
      if (rng.coin() || c.downsample.empty())
        return toggle_move(c, static_cast<int>(rng.uniform_int(0, c.n - 1)));
      const auto which = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(c.downsample.size()) - 1));
      return shift_move(c, which, rng.coin() ? 1 : -1);
    }
    case Coordinate::expansion: {
      const int slot = static_cast<int>(rng.uniform_int(0, c.n - 1));
      return expansion_move(c, slot, rng.coin() ? 1 : -1);
    }
  }
  return std::nullopt;
}

ScdResult scd_search(const SearchSpace& space, const std::vector<DesignPoint>& initial,
                     const AccuracyOracle& oracle, const SearchConstraints& limits, int iters, std::uint64_t seed) {
  if (iters < 0) throw InputError("scd_search needs iters >= 0");
  const DesignPoint* start = nullptr;
  for (const auto& p : initial)
    if (p.feasible && (!start || p.accuracy > start->accuracy)) start = &p;
  if (!start) throw InfeasibleError("scd_search: no feasible initial point");

  ScdResult r;
  r.best = *start;
  r.accepted_accuracy.push_back(start->accuracy);
  std::map<Config, DesignPoint> cache;
  Rng rng(derive_seed(seed, "scd"));
  for (int it = 1; it <= iters; ++it) {
    TraceRow row;
    row.iter = it;
    auto m = random_move(r.best.config, space, rng);
    if (!m) {
      row.coordinate = "none";
      row.move = "out of range";
    } else {
      row.coordinate = std::string(to_string(m->coordinate));
      row.move = m->description;
      auto found = cache.find(m->result);
      if (found == cache.end()) found = cache.emplace(m->result, evaluate(space, m->result, oracle, limits)).first;
      const auto& cand = found->second;
      row.candidate_accuracy = cand.accuracy;
      row.candidate_latency = cand.latency;
      row.candidate_feasible = cand.feasible;
      if (cand.feasible && cand.accuracy > r.best.accuracy) {
        row.accepted = true;
        r.best = cand;
        r.accepted_accuracy.push_back(cand.accuracy);
      }
    }
    row.current_accuracy = r.best.accuracy;
    r.trace.push_back(std::move(row));
  }
  return r;
}

LossMode parse_loss_mode(std::string_view s) {
  if (s == "additive") return LossMode::additive;
  if (s == "multiplicative") return LossMode::multiplicative;
  throw InputError("unknown loss mode '" + std::string(s) + "' (additive or multiplicative)");
}

double hw_nas_loss(double task_loss, double hw_loss, LossMode mode, double weight) {
  if (!(task_loss >= 0.0) || !(hw_loss >= 0.0) || !(weight >= 0.0))
    throw InputError("hw_nas_loss needs non-negative task loss, hardware loss and weight");
  if (mode == LossMode::additive) return task_loss + weight * hw_loss;
  return task_loss * std::pow(hw_loss, weight);
}

ScdRunResult run_scd(const ScdSearchSpec& spec, std::uint64_t seed, int jobs) {
  if (spec.bundles.empty()) throw InputError("search needs at least one bundle");
  ScdRunResult out;
  out.bundles.resize(spec.bundles.size());
  std::vector<double> acc, cost;
  std::vector<std::size_t> buildable;
  for (std::size_t b = 0; b < spec.bundles.size(); ++b) {
    SearchSpace space = spec.space;
    space.hw = spec.bundles[b].hw;
    validate(space);
    SearchConstraints limits{spec.limits.latency_target, space.hw.budget};
    Config probe = spec.probe;
    auto& o = out.bundles[b];
    o.bundle_id = space.hw.bundle.id;
    o.probe = evaluate(space, probe, spec.oracle, limits);
    if (o.probe.buildable) {
      buildable.push_back(b);
      acc.push_back(o.probe.accuracy);
      cost.push_back(cost_of(o.probe, spec.pareto_axis));
    } else {
      o.diagnostic = "probe network cannot be built on bundle '" + o.bundle_id + "'";
    }
  }
  for (auto i : pareto_indices(acc, cost)) out.bundles[buildable[i]].on_pareto = true;

  parallel_for(out.bundles.size(), jobs, [&](std::size_t b) {
    auto& o = out.bundles[b];
    if (!o.on_pareto) return;
    SearchSpace space = spec.space;
    space.hw = spec.bundles[b].hw;
    SearchConstraints limits{spec.limits.latency_target, space.hw.budget};
    const auto bseed = derive_seed(seed, "bundle/" + o.bundle_id);
    auto init = build_initial_dnns(space, limits, spec.oracle, spec.initial, bseed, 1);
    if (init.feasible == 0) {
      o.diagnostic = init.diagnostic;
      return;
    }
    o.search = scd_search(space, init.points, spec.oracle, limits, spec.iters, bseed);
  });

  for (std::size_t b = 0; b < out.bundles.size(); ++b) {
    const auto& o = out.bundles[b];
    if (!o.search) continue;
    if (!out.best_bundle) {
      out.best_bundle = b;
      continue;
    }
    const auto& cur = out.bundles[*out.best_bundle].search->best;
    const auto& cand = o.search->best;
    if (cand.accuracy > cur.accuracy || (cand.accuracy == cur.accuracy && cand.latency < cur.latency))
      out.best_bundle = b;
  }
  return out;
}

namespace {

using nlohmann::json;

Config config_from_json(const json& j, const std::string& where) {
  Config c;
  c.n = j.value("n", 1);
  if (j.contains("downsample")) c.downsample = j.at("downsample").get<std::vector<int>>();
  if (j.contains("expansion"))
    c.expansion_exp = j.at("expansion").get<std::vector<int>>();
  else
    c.expansion_exp.assign(static_cast<std::size_t>(std::max(c.n, 0)), 0);
  std::sort(c.downsample.begin(), c.downsample.end());
  if (std::adjacent_find(c.downsample.begin(), c.downsample.end()) != c.downsample.end())
    throw InputError(where + ": repeated down-sampling position");
  return c;
}

}  // namespace

ScdSearchSpec load_scd_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open search config '" + path.string() + "'");
  const std::string where = path.string();
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(where + ": " + e.what());
  }
  static const std::vector<std::string> known{"name",    "input",   "base_channels", "n_range", "scheme",
                                              "bundles", "latency_target", "pareto_axis", "initial", "iters",
                                              "probe",   "oracle"};
  try {
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw InputError(where + ": unknown key '" + k + "'");
    ScdSearchSpec s;
    s.space.name = j.value("name", std::string("dnn"));
    if (j.contains("input")) {
      const auto in3 = j.at("input").get<std::vector<int>>();
      if (in3.size() != 3) throw InputError(where + ": input must be [H, W, C]");
      s.space.input_h = in3[0];
      s.space.input_w = in3[1];
      s.space.input_c = in3[2];
    }
    s.space.base_channels = j.value("base_channels", 16);
    if (j.contains("n_range")) {
      const auto r = j.at("n_range").get<std::vector<int>>();
      if (r.size() != 2) throw InputError(where + ": n_range must be [lo, hi]");
      s.space.n_min = r[0];
      s.space.n_max = r[1];
    }
    if (j.contains("scheme")) s.space.scheme = ir::parse_scheme(j.at("scheme").get<std::string>());
    if (!j.contains("bundles") || j.at("bundles").empty()) throw InputError(where + ": 'bundles' lists no hardware file");
    const auto base = path.parent_path();
    for (const auto& b : j.at("bundles")) {
      const auto p = base / b.get<std::string>();
      s.bundles.push_back({b.get<std::string>(), accel::load_hw_config(p)});
    }
    if (!j.contains("latency_target")) throw InputError(where + ": missing latency_target");
    s.limits.latency_target = j.at("latency_target").get<double>();
    if (!(s.limits.latency_target >= 0.0)) throw InputError(where + ": latency_target must be non-negative");
    s.pareto_axis = parse_cost_axis(j.value("pareto_axis", std::string("latency")));
    s.initial = j.value("initial", 8);
    s.iters = j.value("iters", 500);
    if (s.initial < 1) throw InputError(where + ": initial must be at least 1");
    if (s.iters < 0) throw InputError(where + ": iters must be non-negative");
    if (j.contains("probe")) {
      s.probe = config_from_json(j.at("probe"), where + " probe");
    } else {
      s.probe.n = s.space.n_min;
      s.probe.expansion_exp.assign(static_cast<std::size_t>(s.space.n_min), 0);
    }
    const json oj = j.value("oracle", json{{"kind", "gops"}});
    const auto kind = oj.value("kind", std::string("gops"));
    if (kind == "gops") {
      const double tau = oj.value("tau", 1.0);
      s.oracle = gops_oracle(tau);
      std::ostringstream os;
      os << "gops tau=" << tau;
      s.oracle_description = os.str();
    } else if (kind == "planted") {
      Config opt = config_from_json(oj, where + " oracle");
      s.oracle_description = "planted " + opt.describe();
      s.oracle = planted_oracle(std::move(opt));
    } else {
      throw InputError(where + ": unknown oracle kind '" + kind + "' (gops or planted)");
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(where + ": " + e.what());
  }
}

}  // namespace coforge::dse
