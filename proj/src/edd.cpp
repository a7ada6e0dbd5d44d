#include "coforge/edd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "coforge/error.hpp"
#include "coforge/quant.hpp"

namespace coforge::edd {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "relu";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw InputError("unknown activation '" + std::string(s) + "' (relu, tanh or identity)");
}

int SupernetSpec::hidden(const OpSpec& op) const {
  return std::max(1, static_cast<int>(std::lround(op.ratio * width)));
}

void validate(const SupernetSpec& net) {
  if (net.width < 1) throw InputError("supernet width must be positive");
  if (net.classes < 2) throw InputError("supernet needs at least two classes");
  if (net.blocks.empty()) throw InputError("supernet has no blocks");
  if (net.bits.empty()) throw InputError("supernet lists no candidate bitwidths");
  for (int b : net.bits)
    if (b < 1 || b > 32) throw InputError("candidate bitwidth " + std::to_string(b) + " outside 1..32");
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const auto& ops = net.blocks[i].ops;
    if (ops.size() < 2) throw InputError("block " + std::to_string(i) + " needs at least two candidate ops");
    for (std::size_t m = 0; m < ops.size(); ++m) {
      if (ops[m].name.empty()) throw InputError("block " + std::to_string(i) + " has an unnamed op");
      if (!(ops[m].ratio > 0.0)) throw InputError("op '" + ops[m].name + "': ratio must be positive");
      for (std::size_t k = 0; k < m; ++k)
        if (ops[k].name == ops[m].name)
          throw InputError("block " + std::to_string(i) + " repeats op name '" + ops[m].name + "'");
    }
  }
}

const PerfEntry& PerfTable::at(std::size_t block, std::size_t op, std::size_t bit) const {
  if (block >= entries.size() || op >= entries[block].size() || bit >= entries[block][op].size())
    throw InputError("performance table has no entry for block " + std::to_string(block) + ", op " +
                     std::to_string(op) + ", bit choice " + std::to_string(bit));
  return entries[block][op][bit];
}

PerfTable build_perf_table(const SupernetSpec& net, const std::vector<accel::IpSpec>& ips) {
  validate(net);
  PerfTable t;
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto& block = t.entries.emplace_back();
    for (const auto& op : net.blocks[i].ops) {
      auto& row = block.emplace_back();
      const auto ip = std::find_if(ips.begin(), ips.end(), [&](const accel::IpSpec& p) { return p.id == op.ip; });
      for (int bits : net.bits) {
        if (ip == ips.end())
          throw InputError("block " + std::to_string(i) + ", op '" + op.name + "', " + std::to_string(bits) +
                           " bits: no IP '" + op.ip + "' in the hardware table");
        ir::LayerSpec expand;
        expand.kind = ir::LayerKind::fc;
        expand.in_channels = net.width;
        expand.out_channels = net.hidden(op);
        ir::LayerSpec project = expand;
        project.in_channels = expand.out_channels;
        project.out_channels = net.width;
        const double scale = bits / 8.0;
        PerfEntry e;
        e.lat = static_cast<double>(accel::reuse_count(expand, *ip) + accel::reuse_count(project, *ip)) *
                ip->lat_cycles * scale;
        for (std::size_t r = 0; r < accel::kResourceTypes; ++r) e.res[r] = ip->res[r] * scale;
        row.push_back(e);
      }
    }
  }
  return t;
}

std::vector<double> gumbel_softmax(std::span<const double> theta, std::span<const double> noise, double tau) {
  if (theta.size() != noise.size()) throw ShapeError("gumbel_softmax: theta and noise sizes differ");
  if (!(tau > 0.0)) throw InputError("gumbel_softmax: temperature must be positive");
  std::vector<double> z(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!(theta[i] > 0.0)) throw InputError("gumbel_softmax: sampling parameters must be positive");
    z[i] = (std::log(theta[i]) + noise[i]) / tau;
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (auto& v : z) s += (v = std::exp(v - mx));
  for (auto& v : z) v /= s;
  return z;
}

GumbelSample sample(std::span<const double> theta, double tau, Rng& rng) {
  GumbelSample s;
  s.tau = tau;
  s.g.resize(theta.size());
  for (auto& g : s.g) g = rng.gumbel();
  s.y = gumbel_softmax(theta, s.g, tau);
  return s;
}

ExpectedPerf expected_perf(ad::Tape& tape, const PerfTable& table, const Relaxation& r) {
  ExpectedPerf out;
  bool started = false;
  const auto acc = [](ad::Var& total, const ad::Var& term, bool first) { total = first ? term : ad::add(total, term); };
  for (std::size_t i = 0; i < r.ops.size(); ++i) {
    const std::size_t m_count = r.ops[i].value().size();
    for (std::size_t m = 0; m < m_count; ++m) {
      const auto& yq = r.bits[i][m];
      const std::size_t q_count = yq.value().size();
      std::vector<double> lat(q_count);
      std::array<std::vector<double>, accel::kResourceTypes> res;
      for (std::size_t q = 0; q < q_count; ++q) {
        const auto& e = table.at(i, m, q);
        lat[q] = e.lat;
        for (std::size_t t = 0; t < accel::kResourceTypes; ++t) res[t].push_back(e.res[t]);
      }
      const ad::Var ym = ad::index(r.ops[i], m);
      acc(out.latency, ad::mul(ym, ad::sum(ad::mul(yq, tape.constant(ad::Tensor::vector(lat))))), !started);
      for (std::size_t t = 0; t < accel::kResourceTypes; ++t)
        acc(out.res[t], ad::mul(ym, ad::sum(ad::mul(yq, tape.constant(ad::Tensor::vector(res[t]))))), !started);
      started = true;
    }
  }
  if (!started) throw InputError("expected_perf: empty relaxation");
  return out;
}

double expected_latency(const PerfTable& table, const std::vector<std::vector<double>>& y_ops,
                        const std::vector<std::vector<std::vector<double>>>& y_bits) {
  double e = 0.0;
  for (std::size_t i = 0; i < y_ops.size(); ++i)
    for (std::size_t m = 0; m < y_ops[i].size(); ++m) {
      double inner = 0.0;
      for (std::size_t q = 0; q < y_bits[i][m].size(); ++q) inner += y_bits[i][m][q] * table.at(i, m, q).lat;
      e += y_ops[i][m] * inner;
    }
  return e;
}

void validate(const EddLossParams& p) {
  if (!(p.beta >= 0.0)) throw InputError("EDD beta must be non-negative");
  if (!(p.c > 1.0)) throw InputError("EDD penalty base C must exceed 1");
  if (!(p.perf_weight >= 0.0)) throw InputError("EDD perf weight must be non-negative");
  for (const auto& [name, ub] : p.res_ub) {
    if (std::find(accel::kResourceNames.begin(), accel::kResourceNames.end(), name) == accel::kResourceNames.end())
      throw InputError("unknown resource type '" + name + "' in res_ub");
    if (!(ub > 0.0)) throw InputError("res_ub for " + name + " must be positive, got " + std::to_string(ub));
  }
}

ad::Var edd_loss(const ad::Var& acc_loss, const ad::Var& perf, const std::array<ad::Var, accel::kResourceTypes>& res,
                 const EddLossParams& p) {
  validate(p);
  ad::Var total = ad::mul(acc_loss, perf);
  const double log_c = std::log(p.c);
  for (std::size_t t = 0; t < accel::kResourceTypes; ++t) {
    const auto it = p.res_ub.find(std::string(accel::kResourceNames[t]));
    if (it == p.res_ub.end()) continue;
    const double ub = it->second;
    const ad::Var pen = ad::exp(ad::scale(ad::add_scalar(res[t], -ub), log_c / ub));
    total = ad::add(total, ad::scale(pen, p.beta));
  }
  return total;
}

ad::Var perf_loss(const ad::Var& expected_lat, double lat_ref, double perf_weight) {
  if (!(lat_ref > 0.0)) throw InputError("reference latency must be positive");
  return ad::scale(ad::add_scalar(ad::scale(expected_lat, perf_weight / lat_ref), 1.0), 1.0 / (1.0 + perf_weight));
}

SupernetState init_state(const SupernetSpec& net, std::uint64_t seed) {
  validate(net);
  SupernetState s;
  s.stem = qat::init_dense("stem", 2, net.width, seed);
  s.stem.relu_after = true;
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    auto& row = s.ops.emplace_back();
    for (const auto& op : net.blocks[i].ops) {
      const std::string base = "b" + std::to_string(i) + "_" + op.name;
      row.push_back({qat::init_dense(base + "_expand", net.width, net.hidden(op), seed),
                     qat::init_dense(base + "_project", net.hidden(op), net.width, seed)});
    }
    s.theta.emplace_back(net.blocks[i].ops.size(), 1.0);
    s.theta_bits.emplace_back(net.blocks[i].ops.size(), std::vector<double>(net.bits.size(), 1.0));
  }
  s.head = qat::init_dense("head", net.width, net.classes, seed);
  return s;
}

StepNoise draw_noise(const SupernetSpec& net, Rng& rng) {
  StepNoise n;
  for (const auto& b : net.blocks) {
    auto& ops = n.ops.emplace_back(b.ops.size());
    for (auto& g : ops) g = rng.gumbel();
    auto& bits = n.bits.emplace_back();
    for (std::size_t m = 0; m < b.ops.size(); ++m) {
      auto& q = bits.emplace_back(net.bits.size());
      for (auto& g : q) g = rng.gumbel();
    }
  }
  return n;
}

StepNoise zero_noise(const SupernetSpec& net) {
  StepNoise n;
  for (const auto& b : net.blocks) {
    n.ops.emplace_back(b.ops.size(), 0.0);
    n.bits.emplace_back(b.ops.size(), std::vector<double>(net.bits.size(), 0.0));
  }
  return n;
}

namespace {

struct DenseVars {
  ad::Var w, b;
};

DenseVars leaves(ad::Tape& t, const qat::DenseLayer& l) {
  return {t.leaf(ad::Tensor::matrix(l.in, l.out, l.w)), t.leaf(ad::Tensor::vector(l.b))};
}

ad::Var quantized(const ad::Var& w, int bits) {
  if (bits >= 32) return w;
  return ad::ste_quantize(w, [bits](std::span<const double> v) { return quant::fake_quantize(v, bits); });
}

ad::Var activate(const ad::Var& h, Activation a) {
  switch (a) {
    case Activation::relu: return ad::relu(h);
    case Activation::tanh: return ad::tanh(h);
    case Activation::identity: return h;
  }
  return h;
}

void copy_grad(qat::DenseLayer& dst, const DenseVars& v) {
  if (!v.w.valid()) return;
  dst.w = v.w.grad().data;
  dst.b = v.b.grad().data;
}

void zero_like(qat::DenseLayer& l) {
  std::fill(l.w.begin(), l.w.end(), 0.0);
  std::fill(l.b.begin(), l.b.end(), 0.0);
}

ad::Var one_hot(ad::Tape& t, std::size_t n, std::size_t k) {
  std::vector<double> v(n, 0.0);
  v[k] = 1.0;
  return t.constant(ad::Tensor::vector(std::move(v)));
}

double batch_accuracy(const ad::Tensor& logits, std::span<const int> labels) {
  std::size_t hit = 0;
  const std::size_t cols = logits.cols();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = logits.data.data() + r * cols;
    hit += static_cast<int>(std::max_element(row, row + cols) - row) == labels[r];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

StepOutput forward_step(const SupernetSpec& net, const PerfTable& table, const SupernetState& state,
                        const ad::Tensor& x, std::span<const int> labels, const StepNoise& noise, double tau,
                        const EddLossParams& params, double lat_ref, const std::optional<Selection>& frozen,
                        Gradients* grads) {
  if (frozen && frozen->size() != net.blocks.size())
    throw InputError("frozen selection must name one (op, bits) pair per block");
  ad::Tape t;
  const DenseVars stem = leaves(t, state.stem);
  ad::Var h = ad::relu(ad::add(ad::matmul(t.constant(x), stem.w), stem.b));

  std::vector<std::vector<DenseVars>> expand_vars(net.blocks.size()), project_vars(net.blocks.size());
  std::vector<ad::Var> theta_vars(net.blocks.size());
  std::vector<std::vector<ad::Var>> theta_bit_vars(net.blocks.size());
  Relaxation relax;
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    const auto& ops = net.blocks[i].ops;
    expand_vars[i].resize(ops.size());
    project_vars[i].resize(ops.size());
    const auto run_op = [&](std::size_t m, const std::function<ad::Var(const ad::Var&)>& mix) {
      const auto e = expand_vars[i][m] = leaves(t, state.ops[i][m].expand);
      const auto p = project_vars[i][m] = leaves(t, state.ops[i][m].project);
      const ad::Var inner = activate(ad::add(ad::matmul(h, mix(e.w)), e.b), ops[m].act);
      return ad::add(ad::matmul(inner, mix(p.w)), p.b);
    };
    if (frozen) {
      const auto [m, q] = (*frozen)[i];
      if (m < 0 || static_cast<std::size_t>(m) >= ops.size() || q < 0 ||
          static_cast<std::size_t>(q) >= net.bits.size())
        throw InputError("frozen selection for block " + std::to_string(i) + " is out of range");
      const int bits = net.bits[q];
      h = run_op(m, [bits](const ad::Var& w) { return quantized(w, bits); });
      relax.ops.push_back(one_hot(t, ops.size(), m));
      auto& bits_row = relax.bits.emplace_back();
      for (std::size_t k = 0; k < ops.size(); ++k) bits_row.push_back(one_hot(t, net.bits.size(), q));
      continue;
    }
    theta_vars[i] = t.leaf(ad::Tensor::vector(state.theta[i]));
    const ad::Var y = ad::gumbel_softmax(theta_vars[i], noise.ops[i], tau);
    relax.ops.push_back(y);
    auto& bits_row = relax.bits.emplace_back();
    ad::Var z;
    for (std::size_t m = 0; m < ops.size(); ++m) {
      theta_bit_vars[i].push_back(t.leaf(ad::Tensor::vector(state.theta_bits[i][m])));
      const ad::Var yq = ad::gumbel_softmax(theta_bit_vars[i][m], noise.bits[i][m], tau);
      bits_row.push_back(yq);
      const auto mix = [&](const ad::Var& w) {
        ad::Var acc;
        for (std::size_t q = 0; q < net.bits.size(); ++q) {
          const ad::Var term = ad::mul_scalar(quantized(w, net.bits[q]), ad::index(yq, q));
          acc = q == 0 ? term : ad::add(acc, term);
        }
        return acc;
      };
      const ad::Var term = ad::mul_scalar(run_op(m, mix), ad::index(y, m));
      z = m == 0 ? term : ad::add(z, term);
    }
    h = z;
  }
  const DenseVars head = leaves(t, state.head);
  const ad::Var logits = ad::add(ad::matmul(h, head.w), head.b);
  const ad::Var acc = ad::cross_entropy(logits, labels);
  const ExpectedPerf perf = expected_perf(t, table, relax);
  const ad::Var pl = perf_loss(perf.latency, lat_ref, params.perf_weight);
  const ad::Var loss = edd_loss(acc, pl, perf.res, params);

  StepOutput out;
  out.loss = loss.value().item();
  out.acc_loss = acc.value().item();
  out.perf_loss = pl.value().item();
  out.expected_latency = perf.latency.value().item();
  out.batch_accuracy = batch_accuracy(logits.value(), labels);
  if (!std::isfinite(out.loss) || out.loss > 1e6)
    throw DivergenceError("EDD search diverged: loss " + std::to_string(out.loss));

  if (grads) {
    t.backward(loss);
    auto& d = grads->d;
    d = state;
    copy_grad(d.stem, stem);
    copy_grad(d.head, head);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
      const std::size_t m_count = net.blocks[i].ops.size();
      for (std::size_t m = 0; m < m_count; ++m) {
        zero_like(d.ops[i][m].expand);
        zero_like(d.ops[i][m].project);
      }
      for (std::size_t m = 0; m < m_count; ++m) {
        copy_grad(d.ops[i][m].expand, expand_vars[i][m]);
        copy_grad(d.ops[i][m].project, project_vars[i][m]);
      }
      if (theta_vars[i].valid()) {
        d.theta[i] = theta_vars[i].grad().data;
        for (std::size_t m = 0; m < m_count; ++m) d.theta_bits[i][m] = theta_bit_vars[i][m].grad().data;
      } else {
        std::fill(d.theta[i].begin(), d.theta[i].end(), 0.0);
        for (auto& row : d.theta_bits[i]) std::fill(row.begin(), row.end(), 0.0);
      }
    }
  }
  return out;
}

void validate(const EddConfig& cfg) {
  if (cfg.steps < 1) throw InputError("EDD search needs at least one step");
  if (cfg.batch_size < 1) throw InputError("batch size must be positive");
  if (!(cfg.lr_weights > 0.0 && cfg.lr_weights <= 1.0)) throw InputError("weight learning rate must lie in (0, 1]");
  if (!(cfg.lr_theta >= 0.0)) throw InputError("sampling-parameter learning rate must be non-negative");
  if (!(cfg.tau0 > 0.0) || !(cfg.tau1 > 0.0)) throw InputError("temperatures must be positive");
}

double temperature(const EddConfig& cfg, int step) {
  if (cfg.steps <= 1) return cfg.tau1;
  const double f = static_cast<double>(step - 1) / static_cast<double>(cfg.steps - 1);
  return cfg.tau0 + (cfg.tau1 - cfg.tau0) * f;
}

Selection argmax_selection(const SupernetState& state) {
  Selection sel;
  for (std::size_t i = 0; i < state.theta.size(); ++i) {
    const auto& th = state.theta[i];
    const int m = static_cast<int>(std::max_element(th.begin(), th.end()) - th.begin());
    const auto& tb = state.theta_bits[i][m];
    const int q = static_cast<int>(std::max_element(tb.begin(), tb.end()) - tb.begin());
    sel.emplace_back(m, q);
  }
  return sel;
}

PerfEntry path_perf(const PerfTable& table, const Selection& sel) {
  PerfEntry e;
  for (std::size_t i = 0; i < sel.size(); ++i) {
    const auto& p = table.at(i, sel[i].first, sel[i].second);
    e.lat += p.lat;
    for (std::size_t t = 0; t < accel::kResourceTypes; ++t) e.res[t] += p.res[t];
  }
  return e;
}

namespace {

void sgd(qat::DenseLayer& l, const qat::DenseLayer& g, double lr) {
  for (std::size_t k = 0; k < l.w.size(); ++k) l.w[k] -= lr * g.w[k];
  for (std::size_t k = 0; k < l.b.size(); ++k) l.b[k] -= lr * g.b[k];
}

// theta = exp(phi); d/dphi = theta * d/dtheta.
void log_space_step(std::vector<double>& theta, const std::vector<double>& g, double lr) {
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double phi = std::clamp(std::log(theta[k]) - lr * theta[k] * g[k], -30.0, 30.0);
    theta[k] = std::exp(phi);
  }
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

double path_accuracy(const SupernetSpec& net, const SupernetState& state, const Selection& sel,
                     const qat::SyntheticDataset& data) {
  if (data.size() == 0) throw InputError("empty dataset");
  const auto idx = all_indices(data.size());
  const auto labels = qat::batch_labels(data, idx);
  // Only the frozen path is built; the table is not consulted for accuracy.
  PerfTable dummy;
  for (const auto& b : net.blocks) {
    auto& block = dummy.entries.emplace_back();
    for (std::size_t m = 0; m < b.ops.size(); ++m) block.emplace_back(net.bits.size(), PerfEntry{1.0, {}});
  }
  EddLossParams p;
  p.perf_weight = 0.0;
  return forward_step(net, dummy, state, qat::batch_inputs(data, idx), labels, zero_noise(net), 1.0, p, 1.0, sel,
                      nullptr)
      .batch_accuracy;
}

EddResult edd_search(const SupernetSpec& net, const PerfTable& table, const qat::SyntheticDataset& data,
                     const EddLossParams& params, const EddConfig& cfg) {
  validate(net);
  validate(params);
  validate(cfg);
  if (data.size() == 0) throw InputError("empty dataset");
  for (int l : data.labels)
    if (l < 0 || l >= net.classes) throw InputError("dataset label " + std::to_string(l) + " outside the supernet's classes");

  EddResult r;
  r.state = init_state(net, cfg.seed);
  {
    std::vector<std::vector<double>> yo;
    std::vector<std::vector<std::vector<double>>> yb;
    for (const auto& b : net.blocks) {
      yo.emplace_back(b.ops.size(), 1.0 / static_cast<double>(b.ops.size()));
      yb.emplace_back(b.ops.size(), std::vector<double>(net.bits.size(), 1.0 / static_cast<double>(net.bits.size())));
    }
    r.lat_ref = expected_latency(table, yo, yb);
  }

  Rng data_rng(derive_seed(cfg.seed, "data"));
  Rng noise_rng(derive_seed(cfg.seed, "noise"));
  for (int step = 1; step <= cfg.steps; ++step) {
    const auto idx = qat::sample_batch(data_rng, data.size(), static_cast<std::size_t>(cfg.batch_size));
    const auto labels = qat::batch_labels(data, idx);
    const double tau = temperature(cfg, step);
    const StepNoise noise = cfg.frozen ? zero_noise(net) : draw_noise(net, noise_rng);
    Gradients g;
    const auto out =
        forward_step(net, table, r.state, qat::batch_inputs(data, idx), labels, noise, tau, params, r.lat_ref,
                     cfg.frozen, &g);
    sgd(r.state.stem, g.d.stem, cfg.lr_weights);
    sgd(r.state.head, g.d.head, cfg.lr_weights);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
      for (std::size_t m = 0; m < net.blocks[i].ops.size(); ++m) {
        sgd(r.state.ops[i][m].expand, g.d.ops[i][m].expand, cfg.lr_weights);
        sgd(r.state.ops[i][m].project, g.d.ops[i][m].project, cfg.lr_weights);
        if (!cfg.frozen) log_space_step(r.state.theta_bits[i][m], g.d.theta_bits[i][m], cfg.lr_theta);
      }
      if (!cfg.frozen) log_space_step(r.state.theta[i], g.d.theta[i], cfg.lr_theta);
    }
    r.trace.push_back({step, tau, out.loss, out.acc_loss, out.perf_loss, out.expected_latency, out.batch_accuracy});
  }

  r.selection = cfg.frozen ? *cfg.frozen : argmax_selection(r.state);
  {
    std::vector<std::vector<double>> yo;
    std::vector<std::vector<std::vector<double>>> yb;
    const auto zn = zero_noise(net);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
      yo.push_back(gumbel_softmax(r.state.theta[i], zn.ops[i], cfg.tau1));
      auto& rows = yb.emplace_back();
      for (std::size_t m = 0; m < net.blocks[i].ops.size(); ++m)
        rows.push_back(gumbel_softmax(r.state.theta_bits[i][m], zn.bits[i][m], cfg.tau1));
    }
    if (cfg.frozen)
      for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        std::fill(yo[i].begin(), yo[i].end(), 0.0);
        yo[i][(*cfg.frozen)[i].first] = 1.0;
        for (auto& row : yb[i]) {
          std::fill(row.begin(), row.end(), 0.0);
          row[(*cfg.frozen)[i].second] = 1.0;
        }
      }
    r.expected_latency = expected_latency(table, yo, yb);
    for (std::size_t i = 0; i < net.blocks.size(); ++i)
      for (std::size_t m = 0; m < yo[i].size(); ++m)
        for (std::size_t q = 0; q < yb[i][m].size(); ++q)
          for (std::size_t t = 0; t < accel::kResourceTypes; ++t)
            r.expected_resource[t] += yo[i][m] * yb[i][m][q] * table.at(i, m, q).res[t];
  }
  const auto pp = path_perf(table, r.selection);
  r.selected_latency = pp.lat;
  r.selected_resource = pp.res;
  r.selected_accuracy = path_accuracy(net, r.state, r.selection, data);
  return r;
}

namespace {

using nlohmann::json;

OpSpec op_from_json(const json& j) {
  OpSpec op;
  op.name = j.at("name").get<std::string>();
  op.act = parse_activation(j.value("act", std::string("relu")));
  op.ratio = j.value("ratio", 1.0);
  op.ip = j.at("ip").get<std::string>();
  return op;
}

}  // namespace

EddSpec load_edd_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open search config '" + path.string() + "'");
  const std::string where = path.string();
  try {
    const json j = json::parse(in);
    static const std::vector<std::string> known{"hw", "width", "classes", "bits", "blocks", "ops", "repeat",
                                                "dataset", "loss", "steps", "batch_size", "lr_weights",
                                                "lr_theta", "tau0", "tau1"};
    for (const auto& [k, v] : j.items())
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw InputError(where + ": unknown key '" + k + "'");
    EddSpec s;
    s.net.width = j.value("width", 8);
    s.net.classes = j.value("classes", 2);
    if (j.contains("bits")) s.net.bits = j.at("bits").get<std::vector<int>>();
    if (j.contains("blocks")) {
      for (const auto& b : j.at("blocks")) {
        BlockSpec block;
        for (const auto& o : b.at("ops")) block.ops.push_back(op_from_json(o));
        s.net.blocks.push_back(std::move(block));
      }
    } else if (j.contains("ops")) {
      BlockSpec block;
      for (const auto& o : j.at("ops")) block.ops.push_back(op_from_json(o));
      const int repeat = j.value("repeat", 1);
      if (repeat < 1) throw InputError(where + ": repeat must be at least 1");
      s.net.blocks.assign(static_cast<std::size_t>(repeat), block);
    } else {
      throw InputError(where + ": needs 'blocks' or 'ops'");
    }
    if (!j.contains("hw")) throw InputError(where + ": missing 'hw' hardware file");
    s.hw_source = j.at("hw").get<std::string>();
    const auto hw = accel::load_hw_config(path.parent_path() / s.hw_source);
    s.table = build_perf_table(s.net, hw.bundle.ips);

    const json d = j.value("dataset", json::object());
    s.data = qat::make_dataset(qat::parse_generator(d.value("generator", std::string("gaussian_blobs"))),
                               d.value("n", std::size_t{256}), d.value("classes", s.net.classes),
                               d.value("seed", std::uint64_t{0}), d.value("noise", 0.5), d.value("spread", 1.5));
    const json l = j.value("loss", json::object());
    s.loss.beta = l.value("beta", 0.0);
    s.loss.c = l.value("c", s.loss.c);
    s.loss.perf_weight = l.value("perf_weight", 1.0);
    if (l.contains("res_ub")) s.loss.res_ub = l.at("res_ub").get<std::map<std::string, double>>();
    validate(s.loss);

    s.cfg.steps = j.value("steps", s.cfg.steps);
    s.cfg.batch_size = j.value("batch_size", s.cfg.batch_size);
    s.cfg.lr_weights = j.value("lr_weights", s.cfg.lr_weights);
    s.cfg.lr_theta = j.value("lr_theta", s.cfg.lr_theta);
    s.cfg.tau0 = j.value("tau0", s.cfg.tau0);
    s.cfg.tau1 = j.value("tau1", s.cfg.tau1);
    validate(s.cfg);
    return s;
  } catch (const json::exception& e) {
    throw InputError(where + ": " + e.what());
  } catch (const InputError& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw InputError(where + ": " + msg);
  }
}

}  // namespace coforge::edd
