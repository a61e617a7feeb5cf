#pragma once

// Experiment configuration, presets, and the runners behind the CLI.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehpolicy/core_model.hpp"
#include "ehpolicy/markov.hpp"
#include "ehpolicy/optimize.hpp"

namespace ehpolicy {

enum class ArrivalFamily { Geometric, Poisson, Explicit };
enum class RewardFamily { LogSnr, Shannon };
enum class ConsumptionKind { Identity, Device, Table };
enum class PolicySource { Solve, Search, Lcp, Bp, Fixed, CrossApply };

struct BatteryConfig {
    int e_max = 100;
    EfficiencyProfile efficiency = QuadraticCapacitor{1.05};
    ChargingScheme scheme = ChargingScheme::QuantizedEuler;
    double frame_length = 1.0;
    double slot_length = 0.005;
    int integration_steps = 256;
    double quantum_joules = 1e-5;
    bool operator==(const BatteryConfig&) const = default;
};

struct ArrivalConfig {
    ArrivalFamily family = ArrivalFamily::Geometric;
    double mean = 20.0;
    int b_max = 50;
    std::vector<double> pmf;  // explicit family only
    bool operator==(const ArrivalConfig&) const = default;
};

struct RewardConfig {
    RewardFamily family = RewardFamily::LogSnr;
    double lambda = 0.01;
    double bandwidth_hz = 2e6;
    double noise_density = 3.981071705534973e-21;
    double channel_gain = 3e-13;
    bool operator==(const RewardConfig&) const = default;
};

struct ConsumptionConfig {
    ConsumptionKind kind = ConsumptionKind::Identity;
    std::string band;                  // device
    std::vector<ConsumptionRow> rows;  // table
    bool operator==(const ConsumptionConfig&) const = default;
};

/// Explicit values win; otherwise device/table consumption uses its natural
/// levels and identity consumption uses 0..min(max, e_max) in `step`.
struct ActionConfig {
    std::vector<int> values;
    int step = 1;
    std::optional<int> max;
    bool operator==(const ActionConfig&) const = default;
};

struct PartitionConfig {
    int subsets = 2;
    std::vector<int> starts;  // overrides `subsets` when non-empty
    bool operator==(const PartitionConfig&) const = default;
};

struct PolicyConfig {
    PolicySource source = PolicySource::Search;
    /// fixed: one action per subset, or one per state.
    std::vector<int> fixed_actions;
    /// cross-apply: policy optimized on this profile, evaluated on the battery.
    EfficiencyProfile cross_profile = ConstantEfficiency{1.0};
    PolicySource cross_inner = PolicySource::Search;
    bool operator==(const PolicyConfig&) const = default;
};

struct SweepConfig {
    std::vector<int> e_max;
    std::vector<int> subsets;
    std::vector<std::string> bands;
    /// Any of op_ri, op_rp, op_ip, op_ii, lcp, bp.
    std::vector<std::string> policies;
    bool operator==(const SweepConfig&) const = default;
};

struct ScenarioConfig {
    std::string id = "custom";
    BatteryConfig battery;
    ArrivalConfig arrivals;
    RewardConfig reward;
    ConsumptionConfig consumption;
    ActionConfig actions;
    PartitionConfig partition;
    PolicyConfig policy;
    int e0 = 0;
    std::uint64_t seed = 1;
    long simulation_frames = 100'000;
    double search_budget = 1e7;
    /// solve: also emit the ideal-battery policy.
    bool include_ideal = false;
    SweepConfig sweep;
    bool operator==(const ScenarioConfig&) const = default;
};

/// Throws ConfigError with "line L, column C" for syntax errors and the JSON
/// pointer of the offending field for schema errors.
ScenarioConfig parse_config(std::string_view text);
ScenarioConfig load_config(const std::filesystem::path& path);
/// Pretty-printed JSON; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ScenarioConfig& config);

std::vector<std::string> preset_names();
ScenarioConfig preset(std::string_view name);

/// Device consumption table for one band, in quanta (levels that round to
/// zero Tx quanta are dropped).
std::vector<std::string> device_bands();
std::vector<ConsumptionRow> device_rows(std::string_view band, double slot_length,
                                        double quantum_joules);

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

BatteryModel make_battery(const ScenarioConfig& config);
ArrivalModel make_arrivals(const ScenarioConfig& config);
RewardModel make_reward(const ScenarioConfig& config);
ConsumptionMap make_consumption(const ScenarioConfig& config);
ActionSet make_actions(const ScenarioConfig& config, const ConsumptionMap& cons);
Partition make_partition(const ScenarioConfig& config);
Scenario make_scenario(const ScenarioConfig& config);

/// Full structural validation; throws ConfigError.
void check_config(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string scenario;
    int e_max = 0;
    int n_subsets = 0;
    std::string policy;
    double g_analytic = 0.0;
    std::optional<double> g_simulated;
    std::optional<double> std_error;
    double g_ub = 0.0;
    double g_ideal = 0.0;
    double wall_time_s = 0.0;
    std::string error;
};

struct RunOptions {
    std::filesystem::path out_dir = ".";
    int threads = 1;
    std::string command;  // recorded in the manifest
};

struct RunSummary {
    std::vector<ResultRow> rows;
    std::vector<std::filesystem::path> files;
    std::vector<std::string> messages;
    bool ok = true;
};

RunSummary run_solve(const ScenarioConfig& config, const RunOptions& options);
RunSummary run_search(const ScenarioConfig& config, const RunOptions& options);
RunSummary run_sweep(const ScenarioConfig& config, const RunOptions& options);
RunSummary run_simulate(const ScenarioConfig& config, const RunOptions& options);
RunSummary run_bound(const ScenarioConfig& config, const RunOptions& options);
/// ok == false when the recharge hypothesis fails or the config is invalid.
RunSummary run_validate(const ScenarioConfig& config, const RunOptions& options);

/// Builds the policy named by config.policy on the configured scenario.
Policy build_configured_policy(const ScenarioConfig& config, const Scenario& scenario);

std::string result_csv_header();
std::string format_result_row(const ResultRow& row);
/// Shortest round-trip decimal, independent of the global locale.
std::string format_number(double x);

std::string sha256_hex(std::string_view data);
std::string library_version();

}  // namespace ehpolicy
