#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "coforge/accel_model.hpp"
#include "coforge/dse.hpp"
#include "coforge/edd.hpp"
#include "coforge/error.hpp"
#include "coforge/model_ir.hpp"
#include "coforge/pipeline.hpp"
#include "coforge/qat.hpp"
#include "coforge/quant.hpp"

#ifndef COFORGE_VERSION
#define COFORGE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace coforge;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out = "out";
  int jobs = 1;
  std::string format = "json";
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << text;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

// Output directory plus the bookkeeping every run needs.
class Run {
 public:
  Run(std::string subcommand, const Common& c) : sub_(std::move(subcommand)), common_(c), dir_(c.out) {
    fs::create_directories(dir_);
  }

  void input(const fs::path& p) { inputs_.push_back(p.string()); }
  // Options that change results; part of the digest.
  void option(const std::string& key, const std::string& value) { options_[key] = value; }

  fs::path path(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& text) const { write_file(path(name), text); }
  void write_json(const std::string& name, const ordered_json& j) const { write(name, j.dump(2) + "\n"); }

  void manifest() const {
    // Length-prefixed contents keep the digest independent of paths and
    // of the platform's line endings in the manifest itself.
    std::string blob = sub_ + '\n';
    for (const auto& p : inputs_) {
      const auto content = read_file(p);
      blob += std::to_string(content.size()) + '\n' + content;
    }
    blob += "seed=" + std::to_string(common_.seed) + '\n';
    for (const auto& [k, v] : options_) blob += k + '=' + v + '\n';
    ordered_json m;
    m["subcommand"] = sub_;
    m["inputs"] = inputs_;
    m["seed"] = common_.seed;
    m["out"] = common_.out;
    m["options"] = options_;
    m["tool_version"] = COFORGE_VERSION;
    m["config_digest"] = sha256_hex(blob);
    write_json("manifest.json", m);
  }

  const Common& common() const { return common_; }
  bool csv() const { return common_.format == "csv"; }

 private:
  std::string sub_;
  Common common_;
  fs::path dir_;
  std::vector<std::string> inputs_;
  std::map<std::string, std::string> options_;
};

ir::QuantScheme scheme_arg(const std::string& s) {
  if (s == "float") return ir::QuantScheme::uniform(32);
  return ir::parse_scheme(s);
}

ordered_json resource_json(const accel::ResourceVec& r) {
  ordered_json j;
  for (std::size_t t = 0; t < accel::kResourceTypes; ++t) j[std::string(accel::kResourceNames[t])] = r[t];
  return j;
}

// ---- quantize

struct QuantizeArgs {
  std::string model, weights, scheme;
  int vecq = 0;
};

int cmd_quantize(const QuantizeArgs& a, const Common& c) {
  Run run("quantize", c);
  const auto graph = ir::load_model(a.model);
  run.input(a.model);
  std::vector<ir::WeightVector> weights;
  if (!a.weights.empty()) {
    const auto map = ir::load_weights(a.weights, graph);
    run.input(a.weights);
    for (const auto* l : graph.weighted_layers()) weights.push_back(map.at(l->id));
  } else {
    // No weight file: He-normal weights from the seed, as training would start.
    for (const auto* l : graph.weighted_layers()) {
      const auto d = qat::init_dense(l->id, static_cast<int>(l->fan_in_channels()),
                                     static_cast<int>(l->weight_count() / std::max<std::int64_t>(1, l->fan_in_channels())),
                                     c.seed);
      weights.push_back({l->id, d.w});
    }
  }
  if (a.vecq == 0 && a.scheme.empty()) throw InputError("quantize needs --scheme or --vecq");
  const auto scheme = a.vecq ? ir::QuantScheme::uniform(a.vecq) : scheme_arg(a.scheme);
  run.option("method", a.vecq ? "vecq" : "elb");
  run.option("scheme", a.vecq ? std::to_string(a.vecq) : a.scheme);

  std::vector<quant::QuantizedWeights> out;
  ordered_json rows = ordered_json::array();
  std::string csv = "layer,bits,J_o,J_m,J_v,alpha,lambda\n";
  const auto wl = graph.weighted_layers();
  for (std::size_t i = 0; i < wl.size(); ++i) {
    const int bits = a.vecq ? a.vecq : scheme.bits_for(wl[i]->quant_group);
    quant::QuantizedWeights q;
    quant::VectorLossReport rep;
    try {
      if (a.vecq) {
        auto r = quant::vecq_quantize(weights[i], bits);
        q = std::move(r.weights);
        rep = r.report;
      } else {
        q = bits == 1 ? quant::quantize_binary(weights[i])
            : bits == 2 ? quant::quantize_ternary(weights[i])
                        : quant::quantize_fixed(weights[i], bits);
        rep = quant::vector_loss(weights[i].values, q.levels, q.alpha());
      }
    } catch (const InputError& e) {
      throw InputError("layer '" + wl[i]->id + "': " + e.what());
    }
    rows.push_back({{"layer", wl[i]->id},
                    {"bits", bits},
                    {"J_o", rep.orientation},
                    {"J_m", rep.modulus},
                    {"J_v", rep.total},
                    {"alpha", q.alpha()},
                    {"lambda", q.interval}});
    csv += wl[i]->id + ',' + std::to_string(bits) + ',' + num(rep.orientation) + ',' + num(rep.modulus) + ',' +
           num(rep.total) + ',' + num(q.alpha()) + ',' + num(q.interval) + '\n';
    out.push_back(std::move(q));
  }
  quant::save_quantized(run.path("quantized.cfq"), out);
  run.write("report.csv", csv);
  if (!run.csv()) run.write_json("report.json", {{"model", graph.name}, {"layers", rows}});
  std::cout << (run.csv() ? csv : ordered_json{{"layers", rows}}.dump(2) + "\n");
  run.manifest();
  return 0;
}

// ---- estimate

struct HwArgs {
  std::string model, hw, scheme = "net-8-8888";
};

int cmd_estimate(const HwArgs& a, const Common& c, bool csv_flag) {
  Run run("estimate", c);
  const auto graph = ir::load_model(a.model);
  run.input(a.model);
  const auto hw = accel::load_hw_config(a.hw);
  run.input(a.hw);
  const auto scheme = scheme_arg(a.scheme);
  run.option("scheme", a.scheme);

  const auto lat = accel::dnn_latency(graph, hw.bundle, hw.budget, hw.calibration, scheme);
  const auto res = accel::dnn_resource(hw.bundle, hw.calibration, hw.budget);

  ordered_json segs = ordered_json::array();
  std::string csv = "segment,first_layer,last_layer,comp_cycles,theta_bytes,cycles\n";
  for (const auto& s : lat.segments) {
    segs.push_back({{"segment", s.label},
                    {"first_layer", s.first_layer},
                    {"last_layer", s.last_layer},
                    {"comp_cycles", s.comp_cycles},
                    {"theta_bytes", s.theta},
                    {"cycles", s.cycles}});
    csv += s.label + ',' + s.first_layer + ',' + s.last_layer + ',' + num(s.comp_cycles) + ',' +
           std::to_string(s.theta) + ',' + num(s.cycles) + '\n';
  }
  csv += "data_movement,,,,," + num(lat.data_movement_cycles) + '\n';
  csv += "total,,,,," + num(lat.cycles) + '\n';
  csv += "\nresource,used,total,utilization\n";
  for (std::size_t t = 0; t < accel::kResourceTypes; ++t)
    csv += std::string(accel::kResourceNames[t]) + ',' + num(res.used[t]) + ',' + num(hw.budget.totals[t]) + ',' +
           num(res.utilization[t]) + '\n';

  ordered_json over = ordered_json::array();
  for (std::size_t t = 0; t < accel::kResourceTypes; ++t)
    if (res.utilization[t] > 1.0) over.push_back(std::string(accel::kResourceNames[t]));
  ordered_json j{{"model", graph.name},
                 {"bundle", hw.bundle.id},
                 {"scheme", ir::format_scheme(scheme, graph.name)},
                 {"segments", segs},
                 {"repetitions", lat.repetitions},
                 {"data_movement_cycles", lat.data_movement_cycles},
                 {"total_cycles", lat.cycles},
                 {"total_ms", lat.ms},
                 {"resource", resource_json(res.used)},
                 {"utilization", resource_json(res.utilization)},
                 {"feasible", res.feasible},
                 {"over_budget", over}};
  const bool as_csv = csv_flag || run.csv();
  if (as_csv)
    run.write("report.csv", csv);
  else
    run.write_json("report.json", j);
  std::cout << (as_csv ? csv : j.dump(2) + "\n");
  run.manifest();
  if (!res.feasible) {
    std::string which;
    for (const auto& o : over) which += (which.empty() ? "" : ", ") + o.get<std::string>();
    throw InfeasibleError("design exceeds the hardware budget on " + which);
  }
  return 0;
}

// ---- schedule

int cmd_schedule(const HwArgs& a, const Common& c, bool compare, int slice_rows) {
  Run run("schedule", c);
  const auto graph = ir::load_model(a.model);
  run.input(a.model);
  const auto hw = accel::load_hw_config(a.hw);
  run.input(a.hw);
  const auto scheme = scheme_arg(a.scheme);
  run.option("scheme", a.scheme);
  if (slice_rows) run.option("slice_rows", std::to_string(slice_rows));

  const auto stages = pipeline::build_stages(graph, hw.bundle, hw.budget, scheme);
  const auto sched = pipeline::schedule(stages);
  const auto plans = pipeline::column_cache_plans(graph, scheme.act_bits,
                                                  slice_rows ? std::optional<int>(slice_rows) : std::nullopt);

  ordered_json st = ordered_json::array();
  std::string startup_csv = "stage,latency,two_column_cycles,finegrained_start,conventional_start\n";
  for (const auto& r : sched.rows) {
    st.push_back({{"stage", r.layer_id},
                  {"latency", r.latency},
                  {"two_column_cycles", r.two_column_cycles},
                  {"finegrained_start", r.finegrained_start},
                  {"conventional_start", r.conventional_start}});
    startup_csv += r.layer_id + ',' + num(r.latency) + ',' + num(r.two_column_cycles) + ',' +
                   num(r.finegrained_start) + ',' + num(r.conventional_start) + '\n';
  }
  ordered_json cp = ordered_json::array();
  std::string cache_csv = "layer,slice_rows,buffer_rows,buffer_bytes,full_map_bytes,reduction\n";
  for (const auto& p : plans) {
    cp.push_back({{"layer", p.layer_id},
                  {"slice_rows", p.slice_rows},
                  {"columns_cached", p.columns_cached},
                  {"buffer_rows", p.buffer_rows},
                  {"buffer_bytes", p.buffer_bytes},
                  {"full_map_bytes", p.full_map_bytes},
                  {"reduction", p.reduction}});
    cache_csv += p.layer_id + ',' + std::to_string(p.slice_rows) + ',' + std::to_string(p.buffer_rows) + ',' +
                 std::to_string(p.buffer_bytes) + ',' + std::to_string(p.full_map_bytes) + ',' + num(p.reduction) +
                 '\n';
  }
  ordered_json j{{"model", graph.name},
                 {"stages", st},
                 {"conventional_startup", sched.conventional},
                 {"finegrained_startup", sched.finegrained},
                 {"ratio", sched.ratio},
                 {"throughput_per_kcycle", sched.throughput},
                 {"cache_plan", cp}};
  run.write("startup.csv", startup_csv);
  run.write("cache_plan.csv", cache_csv);
  if (!run.csv()) run.write_json("schedule.json", j);
  if (compare)
    std::cout << "conventional " << num(sched.conventional) << " finegrained " << num(sched.finegrained) << " ratio "
              << num(sched.ratio) << "x\n";
  else
    std::cout << (run.csv() ? startup_csv + "\n" + cache_csv : j.dump(2) + "\n");
  run.manifest();
  return 0;
}

// ---- search-scd

ordered_json config_json(const dse::Config& c) {
  return {{"bundle", c.bundle_id}, {"n", c.n}, {"downsample", c.downsample}, {"expansion_exp", c.expansion_exp},
          {"expansion", [&] {
             std::vector<double> f;
             for (int k : c.expansion_exp) f.push_back(dse::expansion_factor(k));
             return f;
           }()}};
}

ordered_json point_json(const dse::DesignPoint& p) {
  ordered_json j{{"config", config_json(p.config)},
                 {"accuracy", p.accuracy},
                 {"gops", p.gops},
                 {"buildable", p.buildable},
                 {"feasible", p.feasible},
                 {"resource", resource_json(p.resource.used)}};
  j["latency_cycles"] = std::isfinite(p.latency) ? ordered_json(p.latency) : ordered_json(nullptr);
  return j;
}

int cmd_search_scd(const std::string& config, const Common& c) {
  Run run("search-scd", c);
  const auto spec = dse::load_scd_spec(config);
  run.input(config);
  for (const auto& b : spec.bundles) run.input(fs::path(config).parent_path() / b.source);
  const auto result = dse::run_scd(spec, c.seed, c.jobs);

  std::string points_csv = "bundle,cost,accuracy,on_pareto\n";
  std::string front_csv = "cost,accuracy\n";
  ordered_json bundles = ordered_json::array();
  for (const auto& b : result.bundles) {
    const double cost = dse::cost_of(b.probe, spec.pareto_axis);
    points_csv += b.bundle_id + ',' + num(cost) + ',' + num(b.probe.accuracy) + ',' + (b.on_pareto ? "1" : "0") + '\n';
    if (b.on_pareto) front_csv += num(cost) + ',' + num(b.probe.accuracy) + '\n';
    ordered_json bj{{"bundle", b.bundle_id}, {"probe", point_json(b.probe)}, {"on_pareto", b.on_pareto}};
    if (b.search) bj["best"] = point_json(b.search->best);
    if (!b.diagnostic.empty()) bj["diagnostic"] = b.diagnostic;
    bundles.push_back(bj);
  }
  run.write("pareto_points.csv", points_csv);
  run.write("pareto_front.csv", front_csv);

  ordered_json j{{"oracle", spec.oracle_description},
                 {"pareto_axis", std::string(dse::to_string(spec.pareto_axis))},
                 {"latency_target", spec.limits.latency_target},
                 {"bundles", bundles}};
  std::string trace_csv = "bundle,iter,coordinate,move,accepted,candidate_accuracy,candidate_latency,"
                          "candidate_feasible,current_accuracy\n";
  for (const auto& b : result.bundles) {
    if (!b.search) continue;
    for (const auto& t : b.search->trace)
      trace_csv += b.bundle_id + ',' + std::to_string(t.iter) + ',' + t.coordinate + ',' + t.move + ',' +
                   (t.accepted ? "1" : "0") + ',' + num(t.candidate_accuracy) + ',' + num(t.candidate_latency) +
                   ',' + (t.candidate_feasible ? "1" : "0") + ',' + num(t.current_accuracy) + '\n';
  }
  run.write("trace.csv", trace_csv);
  if (!result.best_bundle) {
    j["best_config"] = nullptr;
    run.write_json("result.json", j);
    run.manifest();
    std::string why;
    for (const auto& b : result.bundles)
      if (!b.diagnostic.empty()) why += "\n  " + b.bundle_id + ": " + b.diagnostic;
    throw InfeasibleError("no bundle produced a feasible network" + why);
  }
  const auto& best = *result.bundles[*result.best_bundle].search;
  j["best_config"] = config_json(best.best.config);
  j["accuracy"] = best.best.accuracy;
  j["latency_cycles"] = best.best.latency;
  j["resource"] = resource_json(best.best.resource.used);
  j["accepted_accuracy"] = best.accepted_accuracy;
  ordered_json trace = ordered_json::array();
  for (const auto& t : best.trace)
    trace.push_back({{"iter", t.iter},
                     {"coordinate", t.coordinate},
                     {"move", t.move},
                     {"accepted", t.accepted},
                     {"candidate_accuracy", t.candidate_accuracy},
                     {"current_accuracy", t.current_accuracy}});
  j["trace"] = trace;
  run.write_json("result.json", j);
  std::cout << "best " << best.best.config.describe() << " accuracy " << num(best.best.accuracy) << " latency "
            << num(best.best.latency) << "\n";
  run.manifest();
  return 0;
}

// ---- search-edd

int cmd_search_edd(const std::string& config, const Common& c) {
  Run run("search-edd", c);
  auto spec = edd::load_edd_spec(config);
  run.input(config);
  run.input(fs::path(config).parent_path() / spec.hw_source);
  spec.cfg.seed = c.seed;
  const auto r = edd::edd_search(spec.net, spec.table, spec.data, spec.loss, spec.cfg);

  std::string trace_csv = "step,tau,loss,acc_loss,perf_loss,expected_latency,batch_accuracy\n";
  for (const auto& t : r.trace)
    trace_csv += std::to_string(t.step) + ',' + num(t.tau) + ',' + num(t.loss) + ',' + num(t.acc_loss) + ',' +
                 num(t.perf_loss) + ',' + num(t.expected_latency) + ',' + num(t.batch_accuracy) + '\n';
  run.write("trace.csv", trace_csv);

  ordered_json blocks = ordered_json::array();
  std::string sel_csv = "block,op,bits,theta\n";
  for (std::size_t i = 0; i < r.selection.size(); ++i) {
    const auto [m, q] = r.selection[i];
    const auto& op = spec.net.blocks[i].ops[m];
    ordered_json theta = ordered_json::object();
    for (std::size_t k = 0; k < spec.net.blocks[i].ops.size(); ++k)
      theta[spec.net.blocks[i].ops[k].name] = r.state.theta[i][k];
    blocks.push_back({{"block", i}, {"op", op.name}, {"bits", spec.net.bits[q]}, {"theta", theta},
                      {"theta_bits", r.state.theta_bits[i][m]}});
    sel_csv += std::to_string(i) + ',' + op.name + ',' + std::to_string(spec.net.bits[q]) + ',' +
               num(r.state.theta[i][m]) + '\n';
  }
  run.write("selection.csv", sel_csv);
  ordered_json j{{"selection", blocks},
                 {"lat_ref", r.lat_ref},
                 {"expected_latency", r.expected_latency},
                 {"expected_resource", resource_json(r.expected_resource)},
                 {"selected_latency", r.selected_latency},
                 {"selected_resource", resource_json(r.selected_resource)},
                 {"selected_accuracy", r.selected_accuracy}};
  run.write_json("result.json", j);
  std::cout << (run.csv() ? sel_csv : j.dump(2) + "\n");
  run.manifest();
  return 0;
}

// ---- train-qat

struct TrainArgs {
  std::string model, scheme = "float", generator = "gaussian_blobs";
  std::size_t n = 256;
  int classes = 0;
  double noise = 0.5, spread = 1.5;
  qat::TrainConfig cfg;
};

int cmd_train_qat(TrainArgs a, const Common& c) {
  Run run("train-qat", c);
  const auto graph = ir::load_model(a.model);
  run.input(a.model);
  a.cfg.scheme = scheme_arg(a.scheme);
  a.cfg.seed = c.seed;
  const int classes = a.classes ? a.classes : graph.layers.back().out_channels;
  const auto data = qat::make_dataset(qat::parse_generator(a.generator), a.n, classes, c.seed, a.noise, a.spread);
  run.option("scheme", a.scheme);
  run.option("generator", a.generator);
  run.option("n", std::to_string(a.n));
  run.option("classes", std::to_string(classes));
  run.option("noise", num(a.noise));
  run.option("spread", num(a.spread));
  run.option("steps", std::to_string(a.cfg.steps));
  run.option("lr", num(a.cfg.learning_rate));
  run.option("batch", std::to_string(a.cfg.batch_size));
  run.option("log_every", std::to_string(a.cfg.log_every));

  const auto r = qat::train(graph, data, a.cfg);
  std::string csv = "step,loss,accuracy\n";
  for (const auto& h : r.history) csv += std::to_string(h.step) + ',' + num(h.loss) + ',' + num(h.accuracy) + '\n';
  run.write("history.csv", csv);
  ir::save_weights(run.path("weights.cfw"), qat::weight_vectors(r.model));
  const double acc = qat::evaluate(r.model, data, a.cfg.scheme);
  ordered_json j{{"model", graph.name},
                 {"scheme", a.scheme},
                 {"steps", a.cfg.steps},
                 {"final_accuracy", acc},
                 {"final_loss", r.step_loss.empty() ? ordered_json(nullptr) : ordered_json(r.step_loss.back())}};
  run.write_json("result.json", j);
  std::cout << (run.csv() ? csv : j.dump(2) + "\n");
  run.manifest();
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("coforge");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%l: %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("COFORGE_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Hardware/software co-design toolkit for quantized DNN accelerators"};
  app.require_subcommand(1);
  app.set_version_flag("--version", COFORGE_VERSION);
  Common common;
  const auto add_common = [&](CLI::App* s) {
    s->add_option("--seed", common.seed, "random seed");
    s->add_option("--out", common.out, "output directory");
    s->add_option("--jobs", common.jobs, "worker threads")->check(CLI::Range(1, 256));
    s->add_option("--format", common.format, "report format")->check(CLI::IsMember({"json", "csv"}));
  };

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "quantize a weight file per scheme or with VecQ");
  add_common(quantize);
  quantize->add_option("--model", qa.model, "model JSON")->required();
  quantize->add_option("--weights", qa.weights, "weight file (random He-normal weights from --seed if absent)");
  auto* scheme_opt = quantize->add_option("--scheme", qa.scheme, "hybrid scheme, e.g. toy-8-8218");
  quantize->add_option("--vecq", qa.vecq, "VecQ bitwidth for every layer")->excludes(scheme_opt)->check(CLI::Range(1, 16));

  HwArgs ea;
  bool est_csv = false;
  auto* estimate = app.add_subcommand("estimate", "latency and resource estimate of a model on a bundle");
  add_common(estimate);
  estimate->add_option("--model", ea.model, "model JSON")->required();
  estimate->add_option("--hw", ea.hw, "hardware TOML")->required();
  estimate->add_option("--scheme", ea.scheme, "hybrid scheme or 'float'");
  estimate->add_flag("--csv", est_csv, "CSV report");

  HwArgs sa;
  bool compare = false;
  int slice_rows = 0;
  auto* sched = app.add_subcommand("schedule", "fine-grained pipeline startup and column-cache plan");
  add_common(sched);
  sched->add_option("--model", sa.model, "model JSON")->required();
  sched->add_option("--hw", sa.hw, "hardware TOML")->required();
  sched->add_option("--scheme", sa.scheme, "hybrid scheme or 'float'");
  sched->add_flag("--compare", compare, "print conventional vs fine-grained startup");
  sched->add_option("--slice-rows", slice_rows, "rows per slice (default: stride)")->check(CLI::PositiveNumber);

  std::string scd_config;
  auto* scd = app.add_subcommand("search-scd", "bundle selection and coordinate-descent network search");
  add_common(scd);
  scd->add_option("--config", scd_config, "search JSON")->required();

  std::string edd_config;
  auto* eddc = app.add_subcommand("search-edd", "differentiable op and bitwidth search");
  add_common(eddc);
  eddc->add_option("--config", edd_config, "search JSON")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train-qat", "quantization-aware training of an MLP on toy data");
  add_common(train);
  train->add_option("--model", ta.model, "model JSON")->required();
  train->add_option("--scheme", ta.scheme, "hybrid scheme or 'float'");
  train->add_option("--generator", ta.generator)->check(CLI::IsMember({"gaussian_blobs", "two_spirals"}));
  train->add_option("--n", ta.n, "dataset size");
  train->add_option("--classes", ta.classes, "class count (default: model output width)");
  train->add_option("--noise", ta.noise);
  train->add_option("--spread", ta.spread);
  train->add_option("--steps", ta.cfg.steps);
  train->add_option("--lr", ta.cfg.learning_rate);
  train->add_option("--batch", ta.cfg.batch_size);
  train->add_option("--log-every", ta.cfg.log_every);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*quantize) return cmd_quantize(qa, common);
    if (*estimate) return cmd_estimate(ea, common, est_csv);
    if (*sched) return cmd_schedule(sa, common, compare, slice_rows);
    if (*scd) return cmd_search_scd(scd_config, common);
    if (*eddc) return cmd_search_edd(edd_config, common);
    if (*train) return cmd_train_qat(ta, common);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 1;
}
