#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coforge/accel_model.hpp"
#include "coforge/autodiff.hpp"
#include "coforge/qat.hpp"

// Differentiable co-search of operation and bitwidth per block.
//
// The micro-supernet is stem (2 -> width, ReLU), N blocks, head
// (width -> classes). A block output is the Gumbel-softmax weighted sum of
// its candidate ops; each op is expand (width -> hidden), activation,
// project (hidden -> width), and its weights are the bitwidth-weighted sum
// of their quantized copies. Sampling parameters are kept positive by
// updating them in log space.

namespace coforge::edd {

enum class Activation { relu, tanh, identity };
std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct OpSpec {
  std::string name;
  Activation act = Activation::relu;
  double ratio = 1.0;  // hidden = max(1, round(ratio * width))
  std::string ip;      // IP providing per-invocation latency and resources
};

struct BlockSpec {
  std::vector<OpSpec> ops;
};

struct SupernetSpec {
  int width = 8;
  int classes = 2;
  std::vector<BlockSpec> blocks;
  std::vector<int> bits{4, 8};  // candidate weight bitwidths, shared by all ops

  int hidden(const OpSpec& op) const;
};

void validate(const SupernetSpec& net);

struct PerfEntry {
  double lat = 0.0;
  accel::ResourceVec res{};
};

// entries[block][op][bit].
struct PerfTable {
  std::vector<std::vector<std::vector<PerfEntry>>> entries;
  const PerfEntry& at(std::size_t block, std::size_t op, std::size_t bit) const;
};

// An op runs as two dense layers on the named IP; its latency is the
// summed reuse count times lat_cycles, scaled by bits/8, and its resources
// are the IP's scaled by bits/8.
PerfTable build_perf_table(const SupernetSpec& net, const std::vector<accel::IpSpec>& ips);

// Plain evaluation of softmax((log theta + g) / tau).
std::vector<double> gumbel_softmax(std::span<const double> theta, std::span<const double> noise, double tau);

struct GumbelSample {
  std::vector<double> y;
  std::vector<double> g;
  double tau = 1.0;
};
GumbelSample sample(std::span<const double> theta, double tau, Rng& rng);

// Relaxed choice weights as autodiff variables.
struct Relaxation {
  std::vector<ad::Var> ops;                // per block, [M]
  std::vector<std::vector<ad::Var>> bits;  // per block and op, [Q]
};

struct ExpectedPerf {
  ad::Var latency;
  std::array<ad::Var, accel::kResourceTypes> res;
};

// Expectation of the table under the relaxation; resources add over blocks.
ExpectedPerf expected_perf(ad::Tape& tape, const PerfTable& table, const Relaxation& r);

// Same expectation with plain probabilities: y_ops[block][op],
// y_bits[block][op][bit].
double expected_latency(const PerfTable& table, const std::vector<std::vector<double>>& y_ops,
                        const std::vector<std::vector<std::vector<double>>>& y_bits);

struct EddLossParams {
  double beta = 0.0;
  double c = 2.718281828459045;
  double perf_weight = 1.0;
  std::map<std::string, double> res_ub;  // resource name -> upper bound; only listed types are penalised
};

void validate(const EddLossParams& p);

// acc * perf + beta * sum_t C^((RES_t - ub_t) / ub_t) over the bounded types.
ad::Var edd_loss(const ad::Var& acc_loss, const ad::Var& perf_loss,
                 const std::array<ad::Var, accel::kResourceTypes>& res, const EddLossParams& p);

// (1 + w E[lat] / lat_ref) / (1 + w): one at the reference latency for any
// w, plain E[lat] / lat_ref as w grows, and a constant at w = 0.
ad::Var perf_loss(const ad::Var& expected_lat, double lat_ref, double perf_weight);

struct OpWeights {
  qat::DenseLayer expand;
  qat::DenseLayer project;
};

struct SupernetState {
  qat::DenseLayer stem;
  std::vector<std::vector<OpWeights>> ops;  // [block][op]
  qat::DenseLayer head;
  std::vector<std::vector<double>> theta;                    // [block][op]
  std::vector<std::vector<std::vector<double>>> theta_bits;  // [block][op][bit]
};

// Dense layers come from qat::init_dense with ids "stem", "b<i>_<op>_expand",
// "b<i>_<op>_project" and "head"; all sampling parameters start at 1.
SupernetState init_state(const SupernetSpec& net, std::uint64_t seed);

// Per-block noise for one step: M op draws, then Q draws per op.
struct StepNoise {
  std::vector<std::vector<double>> ops;
  std::vector<std::vector<std::vector<double>>> bits;
};
StepNoise draw_noise(const SupernetSpec& net, Rng& rng);
StepNoise zero_noise(const SupernetSpec& net);

// Fixed (op, bit) index per block; replaces sampling by one-hot weights.
using Selection = std::vector<std::pair<int, int>>;

struct StepOutput {
  double loss = 0.0;
  double acc_loss = 0.0;
  double perf_loss = 0.0;
  double expected_latency = 0.0;
  double batch_accuracy = 0.0;
};

// Builds the full loss on one batch. With `grads` set, runs backward and
// fills d(loss)/d(theta) and d(loss)/d(theta_bits) plus weight gradients in
// the same layout as the state.
struct Gradients {
  SupernetState d;  // same shapes as the state, holding gradients
};

StepOutput forward_step(const SupernetSpec& net, const PerfTable& table, const SupernetState& state,
                        const ad::Tensor& x, std::span<const int> labels, const StepNoise& noise, double tau,
                        const EddLossParams& params, double lat_ref, const std::optional<Selection>& frozen,
                        Gradients* grads);

struct EddConfig {
  int steps = 300;
  int batch_size = 32;
  double lr_weights = 0.1;
  double lr_theta = 0.5;
  double tau0 = 5.0;
  double tau1 = 0.5;
  std::uint64_t seed = 0;
  // Trains exactly this path with sampling parameters left untouched.
  std::optional<Selection> frozen;
};

void validate(const EddConfig& cfg);

// Linear annealing from tau0 at step 1 to tau1 at the last step.
double temperature(const EddConfig& cfg, int step);

struct TraceRow {
  int step = 0;
  double tau = 0.0;
  double loss = 0.0;
  double acc_loss = 0.0;
  double perf_loss = 0.0;
  double expected_latency = 0.0;
  double batch_accuracy = 0.0;
};

struct EddResult {
  Selection selection;  // argmax theta per block, then argmax theta_bits of that op
  std::vector<TraceRow> trace;
  double lat_ref = 0.0;
  // Noise-free expectation at tau1 under the final parameters.
  double expected_latency = 0.0;
  accel::ResourceVec expected_resource{};
  // Table values of the selected path.
  double selected_latency = 0.0;
  accel::ResourceVec selected_resource{};
  double selected_accuracy = 0.0;  // argmax path on the whole dataset
  SupernetState state;
};

Selection argmax_selection(const SupernetState& state);
PerfEntry path_perf(const PerfTable& table, const Selection& sel);
// Accuracy of the one-hot path on a dataset.
double path_accuracy(const SupernetSpec& net, const SupernetState& state, const Selection& sel,
                     const qat::SyntheticDataset& data);

EddResult edd_search(const SupernetSpec& net, const PerfTable& table, const qat::SyntheticDataset& data,
                     const EddLossParams& params, const EddConfig& cfg);

// Everything the search-edd command reads.
struct EddSpec {
  SupernetSpec net;
  PerfTable table;
  qat::SyntheticDataset data;
  EddLossParams loss;
  EddConfig cfg;
  std::string hw_source;
};

// JSON layout: {hw: "file.toml", width, classes, bits:[...],
// blocks:[{ops:[{name, act, ratio, ip}]}] (or ops + "repeat": N),
// dataset:{generator, n, classes, noise, spread, seed},
// loss:{beta, c, perf_weight, res_ub:{dsp: ...}},
// steps, batch_size, lr_weights, lr_theta, tau0, tau1}.
EddSpec load_edd_spec(const std::filesystem::path& path);

}  // namespace coforge::edd
