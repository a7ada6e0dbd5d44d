#include "coforge/qat.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "coforge/error.hpp"

namespace coforge::qat {

std::string_view to_string(Generator g) {
  return g == Generator::two_spirals ? "two_spirals" : "gaussian_blobs";
}

Generator parse_generator(std::string_view s) {
  if (s == "two_spirals") return Generator::two_spirals;
  if (s == "gaussian_blobs") return Generator::gaussian_blobs;
  throw InputError("unknown dataset generator '" + std::string(s) + "' (expected two_spirals or gaussian_blobs)");
}

SyntheticDataset make_dataset(Generator g, std::size_t n, int classes, std::uint64_t seed, double noise,
                              double spread) {
  if (n == 0) throw InputError("dataset needs at least one point");
  if (classes < 2) throw InputError("dataset needs at least two classes");
  if (!(noise >= 0.0)) throw InputError("dataset noise must be non-negative");
  SyntheticDataset d;
  d.classes = classes;
  d.generator = g;
  d.seed = seed;
  d.points.reserve(n);
  d.labels.reserve(n);
  Rng rng(derive_seed(seed, "dataset"));
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
    const double phase = two_pi * c / classes;
    std::array<double, 2> p{};
    if (g == Generator::gaussian_blobs) {
      p[0] = spread * std::cos(phase);
      p[1] = spread * std::sin(phase);
    } else {
      const double t = rng.uniform();
      const double r = 0.1 + 0.9 * t;
      const double a = phase + two_pi * spread * t;
      p[0] = r * std::cos(a);
      p[1] = r * std::sin(a);
    }
    p[0] += noise * rng.normal();
    p[1] += noise * rng.normal();
    d.points.push_back(p);
    d.labels.push_back(c);
  }
  return d;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0))
    throw InputError("learning rate must lie in (0, 1]");
  if (cfg.steps < 0) throw InputError("step count must be non-negative");
  if (cfg.batch_size < 1) throw InputError("batch size must be positive");
  if (!(cfg.act_momentum > 0.0 && cfg.act_momentum < 1.0)) throw InputError("EMA momentum must lie in (0, 1)");
  if (cfg.log_every < 0) throw InputError("log interval must be non-negative");
  ir::validate(cfg.scheme);
}

DenseLayer init_dense(const std::string& id, int in, int out, std::uint64_t seed) {
  if (in < 1 || out < 1) throw InputError("layer '" + id + "': dense dimensions must be positive");
  DenseLayer l;
  l.id = id;
  l.in = in;
  l.out = out;
  l.w.resize(static_cast<std::size_t>(in) * out);
  l.b.assign(out, 0.0);
  Rng rng(derive_seed(seed, id));
  const double sd = std::sqrt(2.0 / in);
  for (auto& v : l.w) v = sd * rng.normal();
  return l;
}

Mlp build_mlp(const ir::ModelGraph& graph, std::uint64_t seed) {
  ir::validate(graph);
  Mlp mlp;
  int width = -1;
  for (const auto& l : graph.layers) {
    const bool dense_conv = l.kind == ir::LayerKind::conv && l.kernel == 1 && l.input_h == 1 && l.input_w == 1;
    if (l.kind == ir::LayerKind::fc || dense_conv) {
      const auto fan_in = static_cast<int>(l.fan_in_channels());
      if (width < 0 && fan_in != 2)
        throw InputError("layer '" + l.id + "': the trainer expects two input features, got " +
                         std::to_string(fan_in));
      auto d = init_dense(l.id, fan_in, l.out_channels, seed);
      d.group = l.quant_group;
      mlp.layers.push_back(std::move(d));
      width = l.out_channels;
    } else if (l.kind == ir::LayerKind::act) {
      if (mlp.layers.empty())
        throw InputError("layer '" + l.id + "': activation before the first dense layer");
      if (mlp.layers.back().relu_after)
        throw InputError("layer '" + l.id + "': two activations in a row");
      mlp.layers.back().relu_after = true;
      mlp.act_stats.push_back(quant::ActStats{l.id, 0.0, 0.9, false});
    } else {
      throw InputError("layer '" + l.id + "': the trainer handles dense and act layers only, got " +
                       std::string(ir::to_string(l.kind)));
    }
  }
  if (mlp.layers.back().relu_after)
    throw InputError("model '" + graph.name + "' ends in an activation; the last dense layer produces logits");
  return mlp;
}

void set_weights(Mlp& mlp, const ir::WeightMap& weights) {
  for (auto& l : mlp.layers) {
    const auto it = weights.find(l.id);
    if (it == weights.end()) throw InputError("no weights for layer '" + l.id + "'");
    if (it->second.values.size() != l.w.size())
      throw InputError("layer '" + l.id + "': expected " + std::to_string(l.w.size()) + ", got " +
                       std::to_string(it->second.values.size()));
    l.w = it->second.values;
  }
}

std::vector<ir::WeightVector> weight_vectors(const Mlp& mlp) {
  std::vector<ir::WeightVector> out;
  for (const auto& l : mlp.layers) out.push_back({l.id, l.w});
  return out;
}

std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, std::size_t batch) {
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
  return idx;
}

ad::Tensor batch_inputs(const SyntheticDataset& data, std::span<const std::size_t> idx) {
  std::vector<double> x;
  x.reserve(idx.size() * 2);
  for (auto i : idx) {
    x.push_back(data.points[i][0]);
    x.push_back(data.points[i][1]);
  }
  return ad::Tensor::matrix(idx.size(), 2, std::move(x));
}

std::vector<int> batch_labels(const SyntheticDataset& data, std::span<const std::size_t> idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(data.labels[i]);
  return y;
}

namespace {

void check_dataset(const Mlp& mlp, const SyntheticDataset& data) {
  if (data.size() == 0) throw InputError("empty dataset");
  if (data.points.size() != data.labels.size()) throw InputError("dataset points and labels differ in length");
  const int classes = mlp.layers.back().out;
  for (int l : data.labels)
    if (l < 0 || l >= classes)
      throw InputError("label " + std::to_string(l) + " outside the model's " + std::to_string(classes) +
                       " classes");
}

struct Params {
  ad::Var w, b;
};

}  // namespace

TrainResult train(const ir::ModelGraph& graph, const SyntheticDataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  return train(build_mlp(graph, cfg.seed), data, cfg, hooks);
}

TrainResult train(Mlp model, const SyntheticDataset& data, const TrainConfig& cfg, const TrainHooks& hooks) {
  validate(cfg);
  check_dataset(model, data);
  for (auto& s : model.act_stats) s.momentum = cfg.act_momentum;

  TrainResult result;
  const int act_bits = cfg.scheme.act_bits;
  const auto per_epoch = static_cast<int>((data.size() + cfg.batch_size - 1) / cfg.batch_size);
  const int log_every = cfg.log_every > 0 ? cfg.log_every : std::max(1, per_epoch);
  Rng data_rng(derive_seed(cfg.seed, "data"));

  for (int step = 1; step <= cfg.steps; ++step) {
    const auto idx = sample_batch(data_rng, data.size(), static_cast<std::size_t>(cfg.batch_size));
    const auto labels = batch_labels(data, idx);
    ad::Tape tape;
    std::vector<Params> params;
    ad::Var h = tape.constant(batch_inputs(data, idx));
    std::size_t act_slot = 0;
    for (const auto& l : model.layers) {
      Params p{tape.leaf(ad::Tensor::matrix(l.in, l.out, l.w)), tape.leaf(ad::Tensor::vector(l.b))};
      const int bits = cfg.scheme.bits_for(l.group);
      ad::Var wq = p.w;
      if (bits < 32)
        wq = ad::ste_quantize(p.w, [bits](std::span<const double> v) { return quant::fake_quantize(v, bits); });
      if (hooks.on_forward) hooks.on_forward(step, l, wq.value().data);
      h = ad::add(ad::matmul(h, wq), p.b);
      if (l.relu_after) {
        h = ad::relu(h);
        if (act_bits < 32) {
          auto& stats = model.act_stats[act_slot];
          stats = quant::update_act_stats(stats, h.value().data);
          h = ad::ste_quantize(h, [&stats, act_bits](std::span<const double> v) {
            return quant::quantize_activations(v, stats, act_bits);
          });
        }
        ++act_slot;
      }
      params.push_back(p);
    }
    const ad::Var loss = ad::cross_entropy(h, labels);
    const double lv = loss.value().item();
    if (!std::isfinite(lv) || lv > 1e6)
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": loss " + std::to_string(lv));
    tape.backward(loss);
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      auto& l = model.layers[i];
      const auto& gw = params[i].w.grad().data;
      const auto& gb = params[i].b.grad().data;
      for (std::size_t k = 0; k < l.w.size(); ++k) l.w[k] -= cfg.learning_rate * gw[k];
      for (std::size_t k = 0; k < l.b.size(); ++k) l.b[k] -= cfg.learning_rate * gb[k];
    }
    result.step_loss.push_back(lv);
    if (step % log_every == 0 || step == cfg.steps)
      result.history.push_back({step, lv, evaluate(model, data, cfg.scheme)});
  }
  result.model = std::move(model);
  return result;
}

std::vector<std::vector<double>> predict(const Mlp& mlp, const SyntheticDataset& data,
                                         const ir::QuantScheme& scheme) {
  std::vector<std::vector<double>> wq;
  for (const auto& l : mlp.layers) wq.push_back(quant::fake_quantize(l.w, scheme.bits_for(l.group)));
  std::vector<std::vector<double>> logits;
  logits.reserve(data.size());
  for (const auto& pt : data.points) {
    std::vector<double> h{pt[0], pt[1]};
    std::size_t act_slot = 0;
    for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
      const auto& l = mlp.layers[li];
      std::vector<double> y(l.b);
      for (int i = 0; i < l.in; ++i)
        for (int j = 0; j < l.out; ++j) y[j] += h[i] * wq[li][static_cast<std::size_t>(i) * l.out + j];
      if (l.relu_after) {
        for (auto& v : y) v = std::max(v, 0.0);
        const auto& stats = mlp.act_stats[act_slot++];
        if (scheme.act_bits < 32 && stats.initialized)
          for (auto& v : y) v = quant::quantize_activation(v, stats.p, scheme.act_bits);
      }
      h = std::move(y);
    }
    logits.push_back(std::move(h));
  }
  return logits;
}

double accuracy_of(const std::vector<std::vector<double>>& logits, std::span<const int> labels) {
  if (logits.empty()) throw InputError("accuracy of an empty dataset");
  if (logits.size() != labels.size()) throw InputError("logit and label counts differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& row = logits[i];
    const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
    hit += arg == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(logits.size());
}

double evaluate(const Mlp& mlp, const SyntheticDataset& data, const ir::QuantScheme& scheme) {
  check_dataset(mlp, data);
  return accuracy_of(predict(mlp, data, scheme), data.labels);
}

}  // namespace coforge::qat
