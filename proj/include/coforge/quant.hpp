#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coforge/model_ir.hpp"

namespace coforge::quant {

// w_q[i] = scale * levels[i]. For VecQ, scale = alpha * interval where
// interval is the steering-stage lambda and alpha the driving-stage factor;
// the other quantizers report interval = 1 and alpha = scale.
struct QuantizedWeights {
  std::string layer_id;
  std::vector<std::int32_t> levels;
  double scale = 0.0;
  int bits = 0;
  double interval = 1.0;

  double alpha() const { return interval != 0.0 ? scale / interval : 0.0; }
  std::vector<double> reconstruct() const;
};

struct VectorLossReport {
  double orientation = 0.0;  // J_o = 1 - cos(theta)
  double modulus = 0.0;      // J_m = |w_f - alpha * w_q|^2
  double total = 0.0;        // J_v = J_o + J_m
  double cos_theta = 0.0;
};

// Largest level magnitude for a signed symmetric grid: 2^(bits-1) - 1.
std::int64_t max_level(int bits);

// w_b = sign(w) * mean|w|, with sign(0) = +1.
QuantizedWeights quantize_binary(const ir::WeightVector& w);

// Threshold 0.7 * mean|w|; elements strictly above it keep their sign and
// share the scale mean|w| over the kept set. Empty kept set gives scale 0.
QuantizedWeights quantize_ternary(const ir::WeightVector& w);

// Symmetric per-layer max-scaled grid, round half away from zero.
QuantizedWeights quantize_fixed(const ir::WeightVector& w, int bits);

// Bitwidth dispatch used by the training paths: 1 binary, 2 ternary,
// 3..31 fixed point, 32 returns the input unchanged (levels empty).
std::vector<double> fake_quantize(std::span<const double> w, int bits);

VectorLossReport vector_loss(std::span<const double> w_f, std::span<const double> w_q, double alpha);
VectorLossReport vector_loss(std::span<const double> w_f, std::span<const std::int32_t> levels, double alpha);

struct SteerResult {
  std::vector<std::int32_t> levels;
  double interval = 0.0;
};

// Number of log-spaced candidate intervals on [0.01 sigma, 4 sigma].
inline constexpr int kSteerGridSize = 200;
inline constexpr double kSteerGridLo = 0.01;
inline constexpr double kSteerGridHi = 4.0;

// Orientation search: picks the interval on the candidate grid whose rounded
// and clamped levels have the smallest 1 - cos(theta) against w_f.
SteerResult vecq_steer(const ir::WeightVector& w_f, int bits);

// Least-squares modulus factor for fixed direction v = interval * levels.
double vecq_drive(const ir::WeightVector& w_f, std::span<const std::int32_t> levels, double interval);

struct VecqResult {
  QuantizedWeights weights;
  VectorLossReport report;
};

VecqResult vecq_quantize(const ir::WeightVector& w, int bits);

// Exponential moving average of mean |activation| per layer.
struct ActStats {
  std::string layer_id;
  double p = 0.0;
  double momentum = 0.9;
  bool initialized = false;
};

ActStats update_act_stats(const ActStats& stats, std::span<const double> batch);

// Clamps v/p to [0, 1], rounds onto 2^bits - 1 uniform steps and rescales
// by p.
std::vector<double> quantize_activations(std::span<const double> values, const ActStats& stats, int act_bits);
double quantize_activation(double value, double p, int act_bits);

// Quantized weight file: "CFQ1", u32 layer count, then per layer
// (u32 id length, id bytes, u64 element count, u32 bits, f64 scale,
// f64 interval, u8 level width in bytes), then the level payloads in header
// order -- int8 when bits <= 8, int32 otherwise.
void save_quantized(const std::filesystem::path& path, std::span<const QuantizedWeights> layers);
std::vector<QuantizedWeights> load_quantized(const std::filesystem::path& path);

}  // namespace coforge::quant
