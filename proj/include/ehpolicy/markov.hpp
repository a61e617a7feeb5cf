#pragma once

// Markov chain induced by a deterministic policy on the battery state space
// {0..e_max}, its long-run average reward, and a Monte Carlo cross-check.

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "ehpolicy/core_model.hpp"

namespace ehpolicy {

/// Contiguous, disjoint cover of {0..e_max}; subset i is [start(i), start(i+1)).
class Partition {
public:
    /// starts[0] must be 0; strictly increasing; all <= e_max.
    Partition(int e_max, std::vector<int> starts);

    /// N nearly equal blocks; for N = 2 this is LOW = {0..floor(e_max/2)}, HIGH = rest.
    static Partition uniform(int e_max, int n_subsets);
    /// One subset per state (perfect SoC observation).
    static Partition singletons(int e_max);

    int e_max() const noexcept { return e_max_; }
    int size() const noexcept { return static_cast<int>(starts_.size()); }
    const std::vector<int>& starts() const noexcept { return starts_; }
    int first(int subset) const { return starts_.at(subset); }
    int last(int subset) const;
    int subset_size(int subset) const { return last(subset) - first(subset) + 1; }

    /// psi(e).
    int subset_of(int e) const;

    bool operator==(const Partition&) const = default;

private:
    int e_max_;
    std::vector<int> starts_;
};

/// Action per battery state.
struct StatePolicy {
    std::vector<int> action;
    bool operator==(const StatePolicy&) const = default;
};

/// Action per partition subset; the device only sees psi(e).
struct PartitionPolicy {
    Partition partition;
    std::vector<int> action;
    bool operator==(const PartitionPolicy&) const = default;
};

using Policy = std::variant<StatePolicy, PartitionPolicy>;

/// Expands a policy to one action per state; validates dimensions.
std::vector<int> actions_by_state(const Policy& policy, int e_max);

/// Post-consumption level -> distribution of next state, precomputed once per
/// (battery, arrivals) pair. Row a lists (next state, probability) with
/// next = battery_step(a, 0, b) aggregated over b.
class ChargeKernel {
public:
    ChargeKernel(const BatteryModel& battery, const ArrivalModel& arrivals);

    int e_max() const noexcept { return e_max_; }
    int b_max() const noexcept { return b_max_; }
    const std::vector<std::pair<int, double>>& row(int level) const { return rows_.at(level); }
    /// battery_step(level, 0, b) from the cached table.
    int next_level(int level, int b) const {
        return next_[static_cast<std::size_t>(level) * (b_max_ + 1) + b];
    }

private:
    int e_max_;
    int b_max_;
    std::vector<int> next_;
    std::vector<std::vector<std::pair<int, double>>> rows_;
};

struct Chain {
    Eigen::MatrixXd transition;   ///< row-stochastic, (e_max+1)^2
    Eigen::VectorXd state_reward; ///< j(e)
};

Chain build_chain(const BatteryModel& battery, const ArrivalModel& arrivals,
                  const ConsumptionMap& cons, const RewardModel& reward,
                  const ActionSet& actions, const Policy& policy);

/// Same, with a precomputed kernel and a per-state action vector.
Chain build_chain(const ChargeKernel& kernel, const ConsumptionMap& cons,
                  const RewardModel& reward, const ActionSet& actions,
                  const std::vector<int>& state_actions);

struct LongRunResult {
    double reward = 0.0;        ///< G(E_0)
    Eigen::VectorXd stationary; ///< Cesàro-limit occupation pi(.|E_0)
};

/// Exact Cesàro limit from the point mass at e0: decomposes the states
/// reachable from e0 into closed classes and transient states, solves each
/// class's stationary law and the absorption probabilities. Correct for
/// reducible and periodic chains.
LongRunResult long_run_average(const Eigen::MatrixXd& transition,
                               const Eigen::VectorXd& state_reward, int e0 = 0);

/// Independent route to the same limit: power iteration on the lazy chain
/// (I + P)/2, stopping when successive iterates differ by < tol in L1.
/// Throws ConvergenceError (carrying the residual) after max_iterations.
LongRunResult lazy_power_average(const Eigen::MatrixXd& transition,
                                 const Eigen::VectorXd& state_reward, int e0 = 0,
                                 double tol = 1e-13, long max_iterations = 1'000'000);

struct ChainAnalysis {
    Eigen::MatrixXd transition;
    Eigen::VectorXd state_reward;
    Eigen::VectorXd stationary;
    double long_run_reward = 0.0;
};

ChainAnalysis analyze_policy(const BatteryModel& battery, const ArrivalModel& arrivals,
                             const ConsumptionMap& cons, const RewardModel& reward,
                             const ActionSet& actions, const Policy& policy, int e0 = 0);

struct SimulationReport {
    long frames = 0;
    double empirical_reward = 0.0;
    double std_error = 0.0; ///< batch-means estimate
    std::vector<long> visit_counts;
    std::uint64_t seed = 0;

    bool operator==(const SimulationReport&) const = default;
};

/// Runs `frames` frames from e0 with arrivals drawn from a mt19937_64 seeded
/// with `seed`. Bit-reproducible for a given seed.
SimulationReport simulate(const BatteryModel& battery, const ArrivalModel& arrivals,
                          const ConsumptionMap& cons, const RewardModel& reward,
                          const ActionSet& actions, const Policy& policy, long frames,
                          std::uint64_t seed, int e0 = 0);

}  // namespace ehpolicy
