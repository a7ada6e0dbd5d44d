#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coforge/autodiff.hpp"
#include "coforge/model_ir.hpp"
#include "coforge/quant.hpp"
#include "coforge/rng.hpp"

// Quantization-aware training of small dense stacks on 2-D toy data.
//
// Each step quantizes the float weights w_f per scheme group, runs the
// forward pass on the quantized weights and quantized activations, and
// applies the straight-through gradient to w_f with plain SGD.

namespace coforge::qat {

enum class Generator { two_spirals, gaussian_blobs };

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view s);

struct SyntheticDataset {
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;
  int classes = 2;
  Generator generator = Generator::gaussian_blobs;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
};

// Labels cycle 0, 1, ..., classes-1 so the classes stay balanced within one
// sample. Blobs sit on a circle of radius `spread`, with unit-free noise
// `noise` as the per-axis standard deviation; spirals make `spread` turns.
SyntheticDataset make_dataset(Generator g, std::size_t n, int classes, std::uint64_t seed, double noise = 0.5,
                              double spread = 1.5);

struct TrainConfig {
  double learning_rate = 0.1;
  int steps = 500;
  int batch_size = 32;
  std::uint64_t seed = 0;
  ir::QuantScheme scheme = ir::QuantScheme::uniform(32);
  double act_momentum = 0.9;
  // History rows are written every `log_every` steps and after the last
  // one; 0 means once per pass over the data.
  int log_every = 0;
};

void validate(const TrainConfig& cfg);

// Dense layer y = x W + b with W stored row-major as [in][out]. The weight
// file carries W only; biases stay in float and are not quantized.
struct DenseLayer {
  std::string id;
  int in = 0;
  int out = 0;
  ir::QuantGroup group = ir::QuantGroup::non_weighted;
  bool relu_after = false;
  std::vector<double> w;
  std::vector<double> b;
};

struct Mlp {
  std::vector<DenseLayer> layers;
  // One entry per layer with relu_after; tracks post-activation magnitude.
  std::vector<quant::ActStats> act_stats;
};

// He-normal weights drawn from the layer's own stream derive_seed(seed, id);
// zero biases.
DenseLayer init_dense(const std::string& id, int in, int out, std::uint64_t seed);

// Accepts fc layers, 1x1 convolutions on 1x1 maps (equivalent to fc) and act
// layers; act layers become a ReLU after the preceding dense layer. The
// input must be two features and the last layer's width is the class count.
Mlp build_mlp(const ir::ModelGraph& graph, std::uint64_t seed);

// Replaces the weights with the graph-ordered contents of a weight map.
void set_weights(Mlp& mlp, const ir::WeightMap& weights);
std::vector<ir::WeightVector> weight_vectors(const Mlp& mlp);

// Mini-batch index draws; `rng` is the "data" stream of a run.
std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, std::size_t batch);

// Gathers a batch as a [batch, 2] tensor plus labels.
ad::Tensor batch_inputs(const SyntheticDataset& data, std::span<const std::size_t> idx);
std::vector<int> batch_labels(const SyntheticDataset& data, std::span<const std::size_t> idx);

struct HistoryRow {
  int step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

// Called once per quantized layer per step with the weights the forward
// pass consumed and the float master weights they came from.
struct TrainHooks {
  std::function<void(int step, const DenseLayer& layer, std::span<const double> forward_weights)> on_forward;
};

struct TrainResult {
  Mlp model;
  std::vector<HistoryRow> history;
  // Batch loss of every step, step 1 first.
  std::vector<double> step_loss;
};

TrainResult train(const ir::ModelGraph& graph, const SyntheticDataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});
// Continues from an existing model (weights and activation statistics).
TrainResult train(Mlp model, const SyntheticDataset& data, const TrainConfig& cfg, const TrainHooks& hooks = {});

// Logits for every point, with the scheme applied to weights and, when the
// statistics are initialised, to activations.
std::vector<std::vector<double>> predict(const Mlp& mlp, const SyntheticDataset& data,
                                         const ir::QuantScheme& scheme);

// Argmax accuracy; ties resolve to the lowest class index.
double evaluate(const Mlp& mlp, const SyntheticDataset& data, const ir::QuantScheme& scheme);
double accuracy_of(const std::vector<std::vector<double>>& logits, std::span<const int> labels);

}  // namespace coforge::qat
