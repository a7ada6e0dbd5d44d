#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "coforge/accel_model.hpp"
#include "coforge/error.hpp"

namespace coforge::accel {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& msg) const { throw InputError(source_ + ": " + msg); }

  void only_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> keys) const {
    const std::set<std::string_view> allowed(keys);
    for (const auto& [k, v] : t)
      if (!allowed.count(k.str())) fail("unknown key '" + std::string(k.str()) + "' in " + where);
  }

  double number(const toml::table& t, std::string_view key, const std::string& where, double fallback,
                bool required) const {
    const auto* n = t.get(key);
    if (!n) {
      if (required) fail("missing " + where + "." + std::string(key));
      return fallback;
    }
    if (!n->is_number()) fail(where + "." + std::string(key) + " must be a number");
    return *n->value<double>();
  }

  int integer(const toml::table& t, std::string_view key, const std::string& where, int fallback) const {
    const auto* n = t.get(key);
    if (!n) return fallback;
    if (!n->is_integer()) fail(where + "." + std::string(key) + " must be an integer");
    return static_cast<int>(*n->value<std::int64_t>());
  }

  std::string string(const toml::table& t, std::string_view key, const std::string& where,
                     const std::string& fallback) const {
    const auto* n = t.get(key);
    if (!n) return fallback;
    if (!n->is_string()) fail(where + "." + std::string(key) + " must be a string");
    return *n->value<std::string>();
  }

  const toml::table* table(const toml::table& t, std::string_view key, const std::string& where) const {
    const auto* n = t.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(where + "." + std::string(key) + " must be a table");
    return n->as_table();
  }

  ResourceVec resources(const toml::table* t, const std::string& where) const {
    ResourceVec r{};
    if (!t) return r;
    only_keys(*t, where, {"dsp", "lut", "ff", "bram"});
    for (std::size_t i = 0; i < kResourceTypes; ++i) r[i] = number(*t, kResourceNames[i], where, 0.0, false);
    return r;
  }

 private:
  std::string source_;
};

}  // namespace

HwConfig parse_hw_config(std::string_view toml_text, std::string_view source) {
  Reader rd{std::string(source)};
  toml::table doc;
  try {
    doc = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "line " << e.source().begin.line << ": " << e.description();
    rd.fail(os.str());
  }
  rd.only_keys(doc, "document", {"budget", "ip", "bundle", "calibration"});

  HwConfig cfg;
  const auto* budget = rd.table(doc, "budget", "document");
  if (!budget) rd.fail("missing [budget] table");
  rd.only_keys(*budget, "budget", {"dsp", "lut", "ff", "bram", "bw_bytes_per_cycle", "freq_mhz"});
  for (std::size_t i = 0; i < kResourceTypes; ++i)
    cfg.budget.totals[i] = rd.number(*budget, kResourceNames[i], "budget", 0.0, true);
  cfg.budget.bw_bytes_per_cycle = rd.number(*budget, "bw_bytes_per_cycle", "budget", 0.0, true);
  cfg.budget.freq_mhz = rd.number(*budget, "freq_mhz", "budget", 0.0, true);

  const auto* bundle = rd.table(doc, "bundle", "document");
  if (bundle) {
    rd.only_keys(*bundle, "bundle", {"id", "alpha", "beta", "gamma_overhead", "pattern"});
    cfg.bundle.id = rd.string(*bundle, "id", "bundle", "bundle");
    cfg.bundle.alpha = rd.number(*bundle, "alpha", "bundle", 1.0, false);
    cfg.bundle.beta = rd.number(*bundle, "beta", "bundle", 1.0, false);
    cfg.bundle.gamma_overhead = rd.resources(rd.table(*bundle, "gamma_overhead", "bundle"), "bundle.gamma_overhead");
    if (const auto* p = bundle->get("pattern")) {
      const auto* arr = p->as_array();
      if (!arr) rd.fail("bundle.pattern must be an array of strings");
      cfg.bundle.pattern.clear();
      for (const auto& e : *arr) {
        if (!e.is_string()) rd.fail("bundle.pattern must be an array of strings");
        cfg.bundle.pattern.push_back(*e.value<std::string>());
      }
    }
  } else {
    cfg.bundle.id = "bundle";
  }

  const auto* ips = doc.get("ip");
  if (!ips) rd.fail("no [[ip]] entries");
  const auto* arr = ips->as_array();
  if (!arr || !arr->is_array_of_tables()) rd.fail("ip must be an array of tables ([[ip]])");
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto& t = *arr->get(i)->as_table();
    const std::string where = "ip[" + std::to_string(i) + "]";
    rd.only_keys(t, where, {"id", "lat_cycles", "res", "tile", "layer"});
    IpSpec ip;
    ip.id = rd.string(t, "id", where, "");
    if (ip.id.empty()) rd.fail(where + " needs an id");
    ip.lat_cycles = rd.number(t, "lat_cycles", where, 0.0, true);
    ip.res = rd.resources(rd.table(t, "res", where), where + ".res");
    ip.layer = rd.string(t, "layer", where, "");
    if (const auto* tile = rd.table(t, "tile", where)) {
      rd.only_keys(*tile, where + ".tile", {"h", "w", "c_in", "c_out"});
      ip.tile.h = rd.integer(*tile, "h", where + ".tile", 1);
      ip.tile.w = rd.integer(*tile, "w", where + ".tile", 1);
      ip.tile.c_in = rd.integer(*tile, "c_in", where + ".tile", 1);
      ip.tile.c_out = rd.integer(*tile, "c_out", where + ".tile", 1);
    }
    cfg.bundle.ips.push_back(std::move(ip));
  }

  if (const auto* cal = rd.table(doc, "calibration", "document")) {
    rd.only_keys(*cal, "calibration", {"phi", "lat_dm", "gamma", "res_ctl"});
    cfg.calibration.phi = rd.number(*cal, "phi", "calibration", 0.0, false);
    cfg.calibration.lat_dm = rd.number(*cal, "lat_dm", "calibration", 0.0, false);
    cfg.calibration.gamma = rd.number(*cal, "gamma", "calibration", 0.0, false);
    cfg.calibration.res_ctl = rd.resources(rd.table(*cal, "res_ctl", "calibration"), "calibration.res_ctl");
  }

  try {
    validate(cfg.budget);
    validate(cfg.bundle);
    validate(cfg.calibration);
  } catch (const InputError& e) {
    rd.fail(e.what());
  }
  return cfg;
}

HwConfig load_hw_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open hardware file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_hw_config(ss.str(), path.string());
}

}  // namespace coforge::accel
