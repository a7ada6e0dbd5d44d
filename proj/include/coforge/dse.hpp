#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coforge/accel_model.hpp"
#include "coforge/model_ir.hpp"
#include "coforge/rng.hpp"

// Design-space exploration over bundle-replicated networks: Pareto selection
// of bundles, constrained construction of initial networks and stochastic
// coordinate descent on (replication count, down-sampling, channel width).

namespace coforge::dse {

// Expansion factors live on the lattice 1.25^k so moves are exact.
inline constexpr double kExpansionStep = 1.25;
inline constexpr int kMinExpansionExp = -3;
inline constexpr int kMaxExpansionExp = 3;
double expansion_factor(int exponent);

struct Config {
  std::string bundle_id;
  int n = 1;                       // bundle replications
  std::vector<int> downsample;     // sorted, unique, each < n; a 2x2 pool follows that slot
  std::vector<int> expansion_exp;  // one per slot; channels = round(base * 1.25^k)

  auto operator<=>(const Config&) const = default;
  bool operator==(const Config&) const = default;
  std::string describe() const;
};

// What the search may build: the input map, the base width of each slot,
// the bundle hardware and the scheme used for data-movement accounting.
struct SearchSpace {
  std::string name = "dnn";
  int input_h = 32;
  int input_w = 32;
  int input_c = 3;
  int base_channels = 16;
  int n_min = 1;
  int n_max = 6;
  accel::HwConfig hw;
  ir::QuantScheme scheme = ir::QuantScheme::uniform(8);
};

void validate(const SearchSpace& space);
// Structural check of a config against the space (ranges, sorted sets).
void validate(const Config& c, const SearchSpace& space);

// Slot s holds one layer per pattern entry, all of width channels(s), then a
// 2x2 stride-2 pool when s is a down-sampling position. Returns nothing when
// the map shrinks below what the layers need.
std::optional<ir::ModelGraph> build_graph(const SearchSpace& space, const Config& c);

struct SearchConstraints {
  double latency_target = 0.0;  // cycles; zero admits nothing
  accel::HardwareBudget budget;
};

struct DesignPoint {
  Config config;
  double accuracy = 0.0;
  double latency = 0.0;  // cycles, +inf when the graph cannot be built
  double gops = 0.0;
  accel::ResourceEstimate resource;
  bool buildable = false;
  bool feasible = false;
};

using AccuracyOracle = std::function<double(const Config&, const ir::ModelGraph&)>;

// 1 - exp(-GOPs / tau), with GOPs = 2 * MACs / 1e9.
AccuracyOracle gops_oracle(double tau);
// Peaked at `optimum`: 1 / (1 + d) with
// d = 10 |n - n*| + sum over shared slots |k - k*| + |downsample xor downsample*|.
AccuracyOracle planted_oracle(Config optimum);
double planted_distance(const Config& a, const Config& b);

double total_gops(const ir::ModelGraph& graph);

DesignPoint evaluate(const SearchSpace& space, const Config& c, const AccuracyOracle& oracle,
                     const SearchConstraints& limits);

enum class CostAxis { latency, dsp, lut, ff, bram };
CostAxis parse_cost_axis(std::string_view s);
std::string_view to_string(CostAxis axis);
double cost_of(const DesignPoint& p, CostAxis axis);

// Indices of the non-dominated points (maximise accuracy, minimise cost),
// in input order. Identical points do not dominate each other.
std::vector<std::size_t> pareto_indices(std::span<const double> accuracy, std::span<const double> cost);
std::vector<DesignPoint> pareto_filter(const std::vector<DesignPoint>& points, CostAxis axis);

struct InitialResult {
  std::vector<DesignPoint> points;  // k entries, feasible or marked infeasible
  std::size_t feasible = 0;
  std::string diagnostic;  // set when nothing is feasible
};

inline constexpr int kMaxRepairRounds = 100;

// k random configs, each repaired (all widths shrunk one lattice step, then
// one replication removed) until it meets the constraints or 100 rounds
// pass. Point i draws from derive_seed(seed, "init/<i>"); `jobs` threads.
InitialResult build_initial_dnns(const SearchSpace& space, const SearchConstraints& limits,
                                 const AccuracyOracle& oracle, int k, std::uint64_t seed, int jobs = 1);

// Coordinate groups of the SCD move set.
enum class Coordinate { replication, downsample, expansion };
std::string_view to_string(Coordinate c);

struct Move {
  Coordinate coordinate = Coordinate::replication;
  std::string description;
  Config result;
};

// Every single move from c that stays structurally valid.
std::vector<Move> enumerate_moves(const Config& c, const SearchSpace& space);
// One random move; nothing when the drawn move leaves the space.
std::optional<Move> random_move(const Config& c, const SearchSpace& space, Rng& rng);

struct TraceRow {
  int iter = 0;
  std::string coordinate;
  std::string move;
  bool accepted = false;
  double candidate_accuracy = 0.0;
  double candidate_latency = 0.0;
  bool candidate_feasible = false;
  double current_accuracy = 0.0;
};

struct ScdResult {
  DesignPoint best;
  std::vector<TraceRow> trace;
  std::vector<double> accepted_accuracy;  // start point first, then each accepted move
};

// Starts from the most accurate feasible initial point and applies `iters`
// random moves, accepting a move only if the result is feasible and strictly
// more accurate. Throws InfeasibleError when no initial point is feasible.
ScdResult scd_search(const SearchSpace& space, const std::vector<DesignPoint>& initial,
                     const AccuracyOracle& oracle, const SearchConstraints& limits, int iters, std::uint64_t seed);

enum class LossMode { additive, multiplicative };
LossMode parse_loss_mode(std::string_view s);
// additive: L_T + w L_HW; multiplicative: L_T * L_HW^w.
double hw_nas_loss(double task_loss, double hw_loss, LossMode mode, double weight);

// Full three-step flow used by the command line: per bundle a probe network
// for the Pareto step, then initial networks and SCD on every Pareto bundle.
struct BundleCandidate {
  std::string source;  // hardware file
  accel::HwConfig hw;
};

struct ScdSearchSpec {
  SearchSpace space;  // hw comes from each bundle candidate
  std::vector<BundleCandidate> bundles;
  SearchConstraints limits;
  AccuracyOracle oracle;
  std::string oracle_description;
  Config probe;  // bundle_id ignored; evaluated per bundle for the Pareto step
  CostAxis pareto_axis = CostAxis::latency;
  int initial = 8;
  int iters = 500;
};

struct BundleOutcome {
  std::string bundle_id;
  DesignPoint probe;
  bool on_pareto = false;
  std::optional<ScdResult> search;
  std::string diagnostic;
};

struct ScdRunResult {
  std::vector<BundleOutcome> bundles;
  std::optional<std::size_t> best_bundle;  // index into bundles
};

ScdRunResult run_scd(const ScdSearchSpec& spec, std::uint64_t seed, int jobs);

// JSON layout: {name, input:[H,W,C], base_channels, n_range:[lo,hi], scheme,
// bundles:[hw.toml...], latency_target, pareto_axis, initial, iters,
// probe:{n, downsample, expansion}, oracle:{kind: "gops", tau} |
// {kind: "planted", n, downsample, expansion}}. Paths are relative to the
// config file.
ScdSearchSpec load_scd_spec(const std::filesystem::path& path);

}  // namespace coforge::dse
