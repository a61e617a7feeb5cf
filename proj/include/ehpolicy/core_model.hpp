#pragma once

// Physical model of an energy-harvesting device: storage efficiency,
// intra-frame charging, the quantized battery update, arrival statistics,
// reward functions and the Tx-power -> consumption mapping.
//
// All energies are expressed in integer "quanta" unless stated otherwise.

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "ehpolicy/errors.hpp"

namespace ehpolicy {

// ---------------------------------------------------------------------------
// Storage efficiency
// ---------------------------------------------------------------------------

struct ConstantEfficiency {
    double eta = 1.0;
    bool operator==(const ConstantEfficiency&) const = default;
};

/// eta(e) = 1 - (e - e_max/2)^2 / (beta_nl (e_max/2)^2); lossless at half charge.
struct QuadraticCapacitor {
    double beta_nl = 1.05;
    bool operator==(const QuadraticCapacitor&) const = default;
};

/// Knots equally spaced over [0, e_max], linearly interpolated.
struct TabulatedEfficiency {
    std::vector<double> values;
    bool operator==(const TabulatedEfficiency&) const = default;
};

using EfficiencyProfile =
    std::variant<ConstantEfficiency, QuadraticCapacitor, TabulatedEfficiency>;

void validate_profile(const EfficiencyProfile& profile);

/// Storage efficiency at a (possibly fractional) charge level e in [0, e_max].
double efficiency_at(const EfficiencyProfile& profile, double e, int e_max);

// ---------------------------------------------------------------------------
// Battery
// ---------------------------------------------------------------------------

/// How the in-frame charging law dy/dt = (b/T) eta(y) is discretized.
enum class ChargingScheme {
    /// One explicit Euler step per arrived quantum (dt = T/b), with eta read at
    /// the nearest level of the discrete state space.
    QuantizedEuler,
    /// Classical fixed-step RK4 on the continuous efficiency curve.
    Rk4,
};

class BatteryModel {
public:
    BatteryModel(int e_max, EfficiencyProfile efficiency,
                 ChargingScheme scheme = ChargingScheme::QuantizedEuler,
                 double frame_length = 1.0, double slot_length = 0.005,
                 int integration_steps = 256);

    int e_max() const noexcept { return e_max_; }
    const EfficiencyProfile& efficiency() const noexcept { return efficiency_; }
    ChargingScheme scheme() const noexcept { return scheme_; }
    double frame_length() const noexcept { return frame_length_; }
    double slot_length() const noexcept { return slot_length_; }
    int integration_steps() const noexcept { return integration_steps_; }

    /// Same battery with a different efficiency profile or size.
    BatteryModel with_efficiency(EfficiencyProfile efficiency) const;
    BatteryModel with_capacity(int e_max) const;

    bool operator==(const BatteryModel&) const = default;

private:
    int e_max_;
    EfficiencyProfile efficiency_;
    ChargingScheme scheme_;
    double frame_length_;
    double slot_length_;
    int integration_steps_;
};

/// Continuous end-of-frame level y_T for a frame that starts at e_start and
/// receives b quanta. Growth freezes at e_max. Not rounded.
double integrate_frame(const BatteryModel& model, double e_start, int b);

/// As integrate_frame, but without the e_max saturation. Efficiency is read at
/// the level clamped to [0, e_max] once the trajectory leaves the battery range.
double integrate_frame_unsaturated(const BatteryModel& model, double e_start, int b);

/// E_{k+1} = min{ Round(y_T([e - d]^+, b)), e_max }.
int battery_step(const BatteryModel& model, int e, int d, int b);

/// Nearest integer, ties away from zero.
int round_quanta(double x);

// ---------------------------------------------------------------------------
// Energy arrivals
// ---------------------------------------------------------------------------

class ArrivalModel {
public:
    /// pmf over {0, ..., pmf.size()-1}; must be nonnegative and sum to 1.
    explicit ArrivalModel(std::vector<double> pmf);

    /// Normalizes a nonnegative weight vector first.
    static ArrivalModel from_weights(std::vector<double> weights);
    static ArrivalModel degenerate(int b);

    std::span<const double> pmf() const noexcept { return pmf_; }
    double pmf(int b) const { return pmf_.at(static_cast<std::size_t>(b)); }
    double mean() const noexcept { return mean_; }
    int b_max() const noexcept { return static_cast<int>(pmf_.size()) - 1; }

    bool operator==(const ArrivalModel& other) const { return pmf_ == other.pmf_; }

private:
    friend int sample_arrival(const ArrivalModel&, std::mt19937_64&);

    std::vector<double> pmf_;
    std::vector<double> cdf_;
    double mean_ = 0.0;
};

ArrivalModel make_truncated_geometric(double mean_target, int b_max);
ArrivalModel make_truncated_poisson(double mean_target, int b_max);

/// Inverse-CDF draw; consumes exactly one 64-bit word from rng.
int sample_arrival(const ArrivalModel& model, std::mt19937_64& rng);

struct RechargeCheck {
    bool holds = false;
    std::vector<int> violating_states;
};

/// Checks that a maximal arrival raises every non-full state by >= 1 quantum.
RechargeCheck validate_recharge_hypothesis(const BatteryModel& model,
                                           const ArrivalModel& arrivals);

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// r(rho) = ln(1 + lambda rho).
struct LogSnrReward {
    double lambda = 0.01;
    bool operator==(const LogSnrReward&) const = default;
};

/// r(rho) = (delta/T) W log2(1 + H rho_w / (W N0)), rho_w = rho q / delta.
/// Result is in bit/s.
struct ShannonReward {
    double bandwidth_hz = 2e6;
    double noise_density = 3.981071705534973e-21;  // 10^-20.4 W/Hz
    double channel_gain = 3e-13;
    double slot_length = 0.005;
    double frame_length = 1.0;
    double quantum_joules = 1e-5;
    bool operator==(const ShannonReward&) const = default;
};

using RewardModel = std::variant<LogSnrReward, ShannonReward>;

void validate_reward(const RewardModel& reward);

/// Instantaneous reward for a real-valued Tx power (in quanta); r(0) = 0.
double reward_value(const RewardModel& reward, double rho);

// ---------------------------------------------------------------------------
// Actions and consumption
// ---------------------------------------------------------------------------

/// Sorted, distinct, nonnegative Tx powers (quanta); always contains 0.
class ActionSet {
public:
    explicit ActionSet(std::vector<int> actions);
    static ActionSet range(int max, int step = 1);

    std::span<const int> values() const noexcept { return actions_; }
    std::size_t size() const noexcept { return actions_.size(); }
    int operator[](std::size_t i) const { return actions_[i]; }
    bool contains(int rho) const;
    /// Index of rho; throws DomainError when absent.
    std::size_t index_of(int rho) const;

    bool operator==(const ActionSet&) const = default;

private:
    std::vector<int> actions_;
};

struct ConsumptionRow {
    int tx_quanta = 0;
    int consumption_quanta = 0;
    bool operator==(const ConsumptionRow&) const = default;
};

/// D(rho): energy drawn from the battery to transmit at power rho.
class ConsumptionMap {
public:
    /// D(rho) = rho.
    ConsumptionMap() = default;
    /// Discrete device levels; D(0) = 0 is implicit.
    explicit ConsumptionMap(std::vector<ConsumptionRow> rows);

    bool is_identity() const noexcept { return rows_.empty(); }
    std::span<const ConsumptionRow> rows() const noexcept { return rows_; }

    int consumption(int rho) const;
    /// {0} plus every tabulated Tx level (identity: 0..max_rho).
    ActionSet natural_actions(int max_rho) const;

    bool operator==(const ConsumptionMap&) const = default;

private:
    std::vector<ConsumptionRow> rows_;
};

/// Reward attained in a frame: r(rho) if D(rho) <= e, else 0 (failed transmission).
double attained_reward(const RewardModel& reward, const ConsumptionMap& cons,
                       const ActionSet& actions, int rho, int e);

}  // namespace ehpolicy
