#pragma once

// Optimal and heuristic transmission policies, and the storage-aware
// throughput upper bound.

#include <string>
#include <vector>

#include "ehpolicy/core_model.hpp"
#include "ehpolicy/markov.hpp"

namespace ehpolicy {

/// Everything that defines the controlled chain except the policy.
struct Scenario {
    BatteryModel battery;
    ArrivalModel arrivals;
    ConsumptionMap consumption;
    RewardModel reward;
    ActionSet actions;
};

// ---------------------------------------------------------------------------
// Perfect SoC: relative value iteration
// ---------------------------------------------------------------------------

struct RviOptions {
    double span_tolerance = 1e-9;
    long max_sweeps = 100'000;
    /// Aperiodicity transform P <- tau P + (1 - tau) I; leaves gains unchanged.
    double tau = 0.5;
    int e0 = 0;
};

struct PerfectSocSolution {
    StatePolicy policy;
    double gain = 0.0;            ///< RVI gain estimate
    double long_run_reward = 0.0; ///< exact G of `policy` from e0
    long sweeps = 0;
    std::vector<std::string> warnings;
};

PerfectSocSolution solve_perfect_soc(const Scenario& scenario, const RviOptions& options = {});

// ---------------------------------------------------------------------------
// Imperfect SoC: exhaustive search over per-subset actions
// ---------------------------------------------------------------------------

struct SearchOptions {
    int e0 = 0;
    double budget = 1e7;
    int threads = 1;
    bool keep_table = false;
};

struct SearchResult {
    PartitionPolicy best_policy;
    double best_reward = 0.0;
    long evaluated_count = 0;
    /// Filled when SearchOptions::keep_table; indexed in enumeration order.
    std::vector<std::pair<std::vector<int>, double>> reward_by_policy;
};

/// Enumerates all |A|^N deterministic per-subset assignments in lexicographic
/// order; ties go to the lexicographically smallest action vector regardless
/// of thread scheduling.
SearchResult search_partition_policy(const Scenario& scenario, const Partition& partition,
                                     const SearchOptions& options = {});

// ---------------------------------------------------------------------------
// Bound and heuristics
// ---------------------------------------------------------------------------

struct BetaStar {
    double a_star = 0.0;
    double beta = 0.0;
};

/// Largest stored increment from b arrived quanta over the charge level a in
/// [0, e_max] at which the frame starts (no overflow clip).
BetaStar beta_star(const BatteryModel& battery, int b);

struct BoundReport {
    std::vector<double> beta_star_table;
    std::vector<double> a_star_table;
    double b_bar_s = 0.0;
    double g_ub = 0.0;
    double g_ideal = 0.0;

    /// Same construction with the stored level rounded to the quantum grid:
    /// max over integer a of Round(y_T(a, b)) - a. The chain can store up to
    /// half a quantum more than the continuous increment, so this is the
    /// bound the quantized battery actually obeys.
    std::vector<double> beta_star_quantized_table;
    double b_bar_s_quantized = 0.0;
    double g_ub_quantized = 0.0;
};

BoundReport upper_bound(const BatteryModel& battery, const ArrivalModel& arrivals,
                        const RewardModel& reward);

/// Action whose consumption is nearest to `target`; ties go to the lower action.
int nearest_action_by_consumption(double target, const ConsumptionMap& cons,
                                  const ActionSet& actions);

/// Low Complexity Policy: per subset, the unweighted mean consumption of the
/// perfect-SoC real-battery policy, mapped to the nearest action.
PartitionPolicy derive_lcp(const StatePolicy& op_rp, const ConsumptionMap& cons,
                           const Partition& partition, const ActionSet& actions);

/// Balanced Policy (LOW/HIGH only): silent when LOW, consume ~b_bar_s when HIGH.
PartitionPolicy derive_bp(const Partition& partition, const BoundReport& bound,
                          const ConsumptionMap& cons, const ActionSet& actions);

}  // namespace ehpolicy
