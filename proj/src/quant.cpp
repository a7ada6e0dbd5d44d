#include "coforge/quant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "coforge/error.hpp"

namespace coforge::quant {

namespace {

void check_input(std::span<const double> w, const std::string& id) {
  if (w.empty()) throw InputError("layer '" + id + "': cannot quantize an empty weight vector");
  for (double v : w)
    if (!std::isfinite(v)) throw InputError("layer '" + id + "': non-finite weight");
}

double mean_abs(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += std::abs(v);
  return s / static_cast<double>(w.size());
}

double norm(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += v * v;
  return std::sqrt(s);
}

}  // namespace

std::vector<double> QuantizedWeights::reconstruct() const {
  std::vector<double> out(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) out[i] = scale * static_cast<double>(levels[i]);
  return out;
}

std::int64_t max_level(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

QuantizedWeights quantize_binary(const ir::WeightVector& w) {
  check_input(w.values, w.layer_id);
  QuantizedWeights q{w.layer_id, {}, mean_abs(w.values), 1, 1.0};
  q.levels.reserve(w.values.size());
  for (double v : w.values) q.levels.push_back(v < 0.0 ? -1 : 1);
  return q;
}

QuantizedWeights quantize_ternary(const ir::WeightVector& w) {
  check_input(w.values, w.layer_id);
  const double threshold = 0.7 * mean_abs(w.values);
  QuantizedWeights q{w.layer_id, {}, 0.0, 2, 1.0};
  q.levels.reserve(w.values.size());
  double kept_sum = 0.0;
  std::size_t kept = 0;
  for (double v : w.values) {
    if (std::abs(v) > threshold) {
      q.levels.push_back(v < 0.0 ? -1 : 1);
      kept_sum += std::abs(v);
      ++kept;
    } else {
      q.levels.push_back(0);
    }
  }
  q.scale = kept ? kept_sum / static_cast<double>(kept) : 0.0;
  return q;
}

QuantizedWeights quantize_fixed(const ir::WeightVector& w, int bits) {
  if (bits < 3 || bits > 32) throw InputError("fixed-point bitwidth " + std::to_string(bits) + " outside 3..32");
  check_input(w.values, w.layer_id);
  const auto qmax = max_level(bits);
  double peak = 0.0;
  for (double v : w.values) peak = std::max(peak, std::abs(v));
  QuantizedWeights q{w.layer_id, std::vector<std::int32_t>(w.values.size(), 0), peak / static_cast<double>(qmax),
                     bits, 1.0};
  if (q.scale == 0.0) return q;
  for (std::size_t i = 0; i < w.values.size(); ++i) {
    const auto level = std::llround(w.values[i] / q.scale);  // halves round away from zero
    q.levels[i] = static_cast<std::int32_t>(std::clamp<long long>(level, -qmax, qmax));
  }
  return q;
}

std::vector<double> fake_quantize(std::span<const double> w, int bits) {
  if (bits >= 32) return {w.begin(), w.end()};
  const ir::WeightVector wv{"", {w.begin(), w.end()}};
  switch (bits) {
    case 1: return quantize_binary(wv).reconstruct();
    case 2: return quantize_ternary(wv).reconstruct();
    default:
      if (bits < 1) throw InputError("bitwidth " + std::to_string(bits) + " outside 1..32");
      return quantize_fixed(wv, bits).reconstruct();
  }
}

VectorLossReport vector_loss(std::span<const double> w_f, std::span<const double> w_q, double alpha) {
  if (w_f.size() != w_q.size())
    throw InputError("vector_loss: dimension mismatch " + std::to_string(w_f.size()) + " vs " +
                     std::to_string(w_q.size()));
  const double nf = norm(w_f);
  double nv = 0.0;
  for (double v : w_q) nv += (alpha * v) * (alpha * v);
  nv = std::sqrt(nv);
  if (nf == 0.0) throw DegenerateError("vector_loss: full-precision vector has zero norm");
  if (nv == 0.0) throw DegenerateError("vector_loss: quantized vector has zero norm");

  VectorLossReport r;
  double dot = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < w_f.size(); ++i) {
    const double v = alpha * w_q[i];
    dot += (v / nv) * (w_f[i] / nf);
    residual += (w_f[i] - v) * (w_f[i] - v);
  }
  r.cos_theta = std::clamp(dot, -1.0, 1.0);
  r.orientation = 1.0 - r.cos_theta;
  r.modulus = residual;
  r.total = r.orientation + r.modulus;
  return r;
}

VectorLossReport vector_loss(std::span<const double> w_f, std::span<const std::int32_t> levels, double alpha) {
  std::vector<double> w_q(levels.begin(), levels.end());
  return vector_loss(w_f, w_q, alpha);
}

namespace {

// 1 - cos between w and the integer direction; +inf when levels are all zero.
double orientation_of(std::span<const double> w, double w_norm, std::span<const std::int32_t> levels) {
  double dot = 0.0, ll = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    dot += w[i] * levels[i];
    ll += double{1} * levels[i] * levels[i];
  }
  if (ll == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 - dot / (std::sqrt(ll) * w_norm);
}

void round_levels(std::span<const double> w, double interval, std::int64_t qmax, std::vector<std::int32_t>& out) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto level = std::llround(w[i] / interval);
    out[i] = static_cast<std::int32_t>(std::clamp<long long>(level, -qmax, qmax));
  }
}

}  // namespace

SteerResult vecq_steer(const ir::WeightVector& w_f, int bits) {
  if (bits < 2 || bits > 8) throw InputError("VecQ bitwidth " + std::to_string(bits) + " outside 2..8");
  const auto& w = w_f.values;
  check_input(w, w_f.layer_id);
  const double w_norm = norm(w);
  if (w_norm == 0.0) throw DegenerateError("layer '" + w_f.layer_id + "': zero weight vector has no orientation");

  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / static_cast<double>(w.size()));

  SteerResult best;
  if (sigma == 0.0) {
    best.levels.reserve(w.size());
    for (double v : w) best.levels.push_back(v < 0.0 ? -1 : 1);
    best.interval = std::abs(w.front());
    return best;
  }

  const auto qmax = max_level(bits);
  const double lo = kSteerGridLo * sigma;
  const double ratio = kSteerGridHi / kSteerGridLo;
  std::vector<std::int32_t> levels(w.size());
  double best_loss = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kSteerGridSize; ++k) {
    const double interval = lo * std::pow(ratio, static_cast<double>(k) / (kSteerGridSize - 1));
    round_levels(w, interval, qmax, levels);
    const double loss = orientation_of(w, w_norm, levels);
    if (loss < best_loss) {
      best_loss = loss;
      best.levels = levels;
      best.interval = interval;
    }
  }
  if (best.levels.empty()) {
    best.levels.reserve(w.size());
    for (double v : w) best.levels.push_back(v < 0.0 ? -1 : 1);
    best.interval = mean_abs(w);
  }
  return best;
}

double vecq_drive(const ir::WeightVector& w_f, std::span<const std::int32_t> levels, double interval) {
  if (levels.size() != w_f.values.size())
    throw InputError("layer '" + w_f.layer_id + "': level count " + std::to_string(levels.size()) +
                     " does not match weight count " + std::to_string(w_f.values.size()));
  double wv = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double v = interval * levels[i];
    wv += w_f.values[i] * v;
    vv += v * v;
  }
  if (vv == 0.0) throw DegenerateError("layer '" + w_f.layer_id + "': all-zero levels leave no direction to scale");
  return wv / vv;
}

VecqResult vecq_quantize(const ir::WeightVector& w, int bits) {
  auto steer = vecq_steer(w, bits);
  const double alpha = vecq_drive(w, steer.levels, steer.interval);
  VecqResult r;
  r.weights = QuantizedWeights{w.layer_id, std::move(steer.levels), alpha * steer.interval, bits, steer.interval};
  r.report = vector_loss(w.values, r.weights.levels, r.weights.scale);
  return r;
}

ActStats update_act_stats(const ActStats& stats, std::span<const double> batch) {
  if (batch.empty()) throw InputError("layer '" + stats.layer_id + "': empty activation batch");
  if (!(stats.momentum > 0.0 && stats.momentum < 1.0))
    throw InputError("layer '" + stats.layer_id + "': EMA momentum must lie in (0, 1)");
  const double stat = mean_abs(batch);
  ActStats out = stats;
  out.p = stats.initialized ? stats.momentum * stats.p + (1.0 - stats.momentum) * stat : stat;
  // An all-zero first batch would otherwise leave p = 0 and no usable range.
  out.p = std::max(out.p, 1e-12);
  out.initialized = true;
  return out;
}

double quantize_activation(double value, double p, int act_bits) {
  const double steps = std::ldexp(1.0, act_bits) - 1.0;
  const double x = std::clamp(value / p, 0.0, 1.0);
  return std::round(x * steps) / steps * p;
}

std::vector<double> quantize_activations(std::span<const double> values, const ActStats& stats, int act_bits) {
  if (!stats.initialized || !(stats.p > 0.0))
    throw InputError("layer '" + stats.layer_id + "': activation statistics are not initialised");
  if (act_bits < 1 || act_bits > 32)
    throw InputError("activation bitwidth " + std::to_string(act_bits) + " outside 1..32");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = quantize_activation(values[i], stats.p, act_bits);
  return out;
}

namespace {
constexpr std::string_view kQuantMagic = "CFQ1";
}

void save_quantized(const std::filesystem::path& path, std::span<const QuantizedWeights> layers) {
  detail::ByteWriter w;
  w.put_bytes(kQuantMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.layer_id.size()));
    w.put_bytes(l.layer_id);
    w.put<std::uint64_t>(l.levels.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.bits));
    w.put<double>(l.scale);
    w.put<double>(l.interval);
    w.put<std::uint8_t>(l.bits <= 8 ? 1 : 4);
  }
  for (const auto& l : layers) {
    for (auto v : l.levels) {
      if (l.bits <= 8)
        w.put<std::int8_t>(static_cast<std::int8_t>(v));
      else
        w.put<std::int32_t>(v);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

std::vector<QuantizedWeights> load_quantized(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto data = ss.str();
  detail::ByteReader r(data, path.string());
  if (r.get_bytes(4) != kQuantMagic) throw InputError(path.string() + ": not a quantized weight file (bad magic)");
  const auto count = r.get<std::uint32_t>();
  std::vector<QuantizedWeights> layers(count);
  std::vector<std::uint64_t> sizes(count);
  std::vector<std::uint8_t> widths(count);
  std::uint64_t payload = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>();
    layers[i].layer_id = std::string(r.get_bytes(len));
    sizes[i] = r.get<std::uint64_t>();
    layers[i].bits = static_cast<int>(r.get<std::uint32_t>());
    layers[i].scale = r.get<double>();
    layers[i].interval = r.get<double>();
    widths[i] = r.get<std::uint8_t>();
    if (widths[i] != 1 && widths[i] != 4) throw InputError(path.string() + ": bad level width");
    payload += sizes[i] * widths[i];
  }
  if (r.remaining() != payload)
    throw InputError(path.string() + ": payload size mismatch: expected " + std::to_string(payload) +
                     " bytes, got " + std::to_string(r.remaining()));
  for (std::uint32_t i = 0; i < count; ++i) {
    layers[i].levels.resize(sizes[i]);
    for (auto& v : layers[i].levels) v = widths[i] == 1 ? r.get<std::int8_t>() : r.get<std::int32_t>();
  }
  return layers;
}

}  // namespace coforge::quant
