#include "ehpolicy/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <fmt/format.h>

namespace ehpolicy {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// Unchecked evaluation; callers guarantee 0 <= e <= e_max.
double eta_unchecked(const EfficiencyProfile& profile, double e, int e_max) {
    return std::visit(
        overloaded{
            [](const ConstantEfficiency& p) { return p.eta; },
            [&](const QuadraticCapacitor& p) {
                const double half = 0.5 * e_max;
                const double u = e - half;
                return 1.0 - (u * u) / (p.beta_nl * half * half);
            },
            [&](const TabulatedEfficiency& p) {
                const auto n = p.values.size();
                if (n == 1) return p.values.front();
                const double x = e / e_max * static_cast<double>(n - 1);
                const auto i = std::min(static_cast<std::size_t>(x), n - 2);
                const double w = x - static_cast<double>(i);
                return (1.0 - w) * p.values[i] + w * p.values[i + 1];
            },
        },
        profile);
}

double clamp_level(double y, int e_max) {
    return std::clamp(y, 0.0, static_cast<double>(e_max));
}

double integrate(const BatteryModel& model, double e_start, int b, bool saturate) {
    const int e_max = model.e_max();
    const double cap = static_cast<double>(e_max);
    const auto& profile = model.efficiency();
    double y = e_start;
    if (b == 0) return y;

    if (model.scheme() == ChargingScheme::QuantizedEuler) {
        for (int i = 0; i < b; ++i) {
            if (saturate && y >= cap) return cap;
            const int level = std::clamp(round_quanta(y), 0, e_max);
            y += eta_unchecked(profile, level, e_max);
            if (saturate) y = std::min(y, cap);
        }
        return y;
    }

    const double T = model.frame_length();
    const double h = T / model.integration_steps();
    const double rate = static_cast<double>(b) / T;
    auto f = [&](double level) {
        return rate * eta_unchecked(profile, clamp_level(level, e_max), e_max);
    };
    for (int i = 0; i < model.integration_steps(); ++i) {
        if (saturate && y >= cap) return cap;
        const double k1 = f(y);
        const double k2 = f(y + 0.5 * h * k1);
        const double k3 = f(y + 0.5 * h * k2);
        const double k4 = f(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (saturate) y = std::min(y, cap);
    }
    return y;
}

// Exponential tilt of a base shape on {0..b_max}: w_b ∝ exp(base_b + theta b).
// The truncated mean is strictly increasing in theta, so bisection is exact.
ArrivalModel fit_tilted(const std::vector<double>& base_log_weight, double target) {
    const int b_max = static_cast<int>(base_log_weight.size()) - 1;
    std::vector<double> w(base_log_weight.size());

    auto tilt = [&](double theta) {
        double top = -std::numeric_limits<double>::infinity();
        for (int b = 0; b <= b_max; ++b) {
            w[b] = base_log_weight[b] + theta * b;
            top = std::max(top, w[b]);
        }
        double sum = 0.0;
        for (auto& x : w) {
            x = std::exp(x - top);
            sum += x;
        }
        double mean = 0.0;
        for (int b = 0; b <= b_max; ++b) {
            w[b] /= sum;
            mean += b * w[b];
        }
        return mean;
    };

    double lo = -200.0;
    double hi = 200.0;
    for (int it = 0; it < 400 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tilt(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    const double mean = tilt(0.5 * (lo + hi));
    if (std::abs(mean - target) > 1e-9) {
        throw NumericError(
            fmt::format("arrival fit: mean {} does not reach target {}", mean, target));
    }
    return ArrivalModel::from_weights(w);
}

void check_mean_target(double mean_target, int b_max) {
    if (b_max < 1 || !(mean_target > 0.0) || !(mean_target < b_max)) {
        throw DomainError(fmt::format(
            "truncated arrivals need 0 < mean < b_max (mean={}, b_max={})", mean_target,
            b_max));
    }
}

}  // namespace

// ---------------------------------------------------------------------------

void validate_profile(const EfficiencyProfile& profile) {
    std::visit(overloaded{
                   [](const ConstantEfficiency& p) {
                       if (!(p.eta > 0.0 && p.eta <= 1.0))
                           throw ConfigError("constant efficiency must lie in (0, 1]");
                   },
                   [](const QuadraticCapacitor& p) {
                       if (!(p.beta_nl > 1.0))
                           throw ConfigError("quadratic capacitor needs beta_nl > 1");
                   },
                   [](const TabulatedEfficiency& p) {
                       if (p.values.empty())
                           throw ConfigError("tabulated efficiency needs at least one knot");
                       for (double v : p.values)
                           if (!(v > 0.0 && v <= 1.0))
                               throw ConfigError("tabulated efficiency knots must lie in (0, 1]");
                   },
               },
               profile);
}

double efficiency_at(const EfficiencyProfile& profile, double e, int e_max) {
    if (e_max < 1) throw DomainError("e_max must be >= 1");
    if (!(e >= 0.0 && e <= e_max))
        throw DomainError(fmt::format("charge level {} outside [0, {}]", e, e_max));
    return eta_unchecked(profile, e, e_max);
}

BatteryModel::BatteryModel(int e_max, EfficiencyProfile efficiency, ChargingScheme scheme,
                           double frame_length, double slot_length, int integration_steps)
    : e_max_(e_max),
      efficiency_(std::move(efficiency)),
      scheme_(scheme),
      frame_length_(frame_length),
      slot_length_(slot_length),
      integration_steps_(integration_steps) {
    if (e_max_ < 1) throw ConfigError("battery e_max must be >= 1");
    if (!(frame_length_ > 0.0)) throw ConfigError("frame length T must be positive");
    if (!(slot_length_ > 0.0 && slot_length_ < frame_length_))
        throw ConfigError("slot length must satisfy 0 < delta < T");
    if (integration_steps_ < 1) throw ConfigError("integration_steps must be >= 1");
    validate_profile(efficiency_);
}

BatteryModel BatteryModel::with_efficiency(EfficiencyProfile efficiency) const {
    return BatteryModel(e_max_, std::move(efficiency), scheme_, frame_length_, slot_length_,
                        integration_steps_);
}

BatteryModel BatteryModel::with_capacity(int e_max) const {
    return BatteryModel(e_max, efficiency_, scheme_, frame_length_, slot_length_,
                        integration_steps_);
}

double integrate_frame(const BatteryModel& model, double e_start, int b) {
    if (!(e_start >= 0.0 && e_start <= model.e_max()))
        throw DomainError(fmt::format("e_start {} outside [0, {}]", e_start, model.e_max()));
    if (b < 0) throw DomainError("arrivals must be nonnegative");
    return integrate(model, e_start, b, true);
}

double integrate_frame_unsaturated(const BatteryModel& model, double e_start, int b) {
    if (!(e_start >= 0.0 && e_start <= model.e_max()))
        throw DomainError(fmt::format("e_start {} outside [0, {}]", e_start, model.e_max()));
    if (b < 0) throw DomainError("arrivals must be nonnegative");
    return integrate(model, e_start, b, false);
}

int round_quanta(double x) { return static_cast<int>(std::lround(x)); }

int battery_step(const BatteryModel& model, int e, int d, int b) {
    if (e < 0 || e > model.e_max())
        throw DomainError(fmt::format("state {} outside [0, {}]", e, model.e_max()));
    if (d < 0) throw DomainError("consumption must be nonnegative");
    if (b < 0) throw DomainError("arrivals must be nonnegative");
    const int start = std::max(0, e - d);
    return std::min(round_quanta(integrate(model, start, b, true)), model.e_max());
}

// ---------------------------------------------------------------------------

ArrivalModel::ArrivalModel(std::vector<double> pmf) : pmf_(std::move(pmf)) {
    if (pmf_.empty()) throw ConfigError("arrival pmf must be nonempty");
    double sum = 0.0;
    for (double p : pmf_) {
        if (!(p >= 0.0)) throw ConfigError("arrival pmf entries must be nonnegative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ConfigError(fmt::format("arrival pmf sums to {} (expected 1)", sum));
    cdf_.resize(pmf_.size());
    std::partial_sum(pmf_.begin(), pmf_.end(), cdf_.begin());
    cdf_.back() = 1.0;
    for (std::size_t b = 0; b < pmf_.size(); ++b) mean_ += static_cast<double>(b) * pmf_[b];
}

ArrivalModel ArrivalModel::from_weights(std::vector<double> weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(sum > 0.0)) throw ConfigError("arrival weights must have positive total");
    for (auto& w : weights) {
        if (!(w >= 0.0)) throw ConfigError("arrival weights must be nonnegative");
        w /= sum;
    }
    return ArrivalModel(std::move(weights));
}

ArrivalModel ArrivalModel::degenerate(int b) {
    if (b < 0) throw DomainError("arrival count must be nonnegative");
    std::vector<double> pmf(static_cast<std::size_t>(b) + 1, 0.0);
    pmf.back() = 1.0;
    return ArrivalModel(std::move(pmf));
}

ArrivalModel make_truncated_geometric(double mean_target, int b_max) {
    check_mean_target(mean_target, b_max);
    return fit_tilted(std::vector<double>(static_cast<std::size_t>(b_max) + 1, 0.0),
                      mean_target);
}

ArrivalModel make_truncated_poisson(double mean_target, int b_max) {
    check_mean_target(mean_target, b_max);
    std::vector<double> base(static_cast<std::size_t>(b_max) + 1);
    for (int b = 0; b <= b_max; ++b) base[b] = -std::lgamma(b + 1.0);
    return fit_tilted(base, mean_target);
}

int sample_arrival(const ArrivalModel& model, std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const auto it = std::upper_bound(model.cdf_.begin(), model.cdf_.end(), u);
    const auto b = std::distance(model.cdf_.begin(), it);
    return static_cast<int>(std::min<std::ptrdiff_t>(b, model.b_max()));
}

RechargeCheck validate_recharge_hypothesis(const BatteryModel& model,
                                           const ArrivalModel& arrivals) {
    RechargeCheck check;
    const int b_max = arrivals.b_max();
    for (int e = 0; e < model.e_max(); ++e) {
        if (battery_step(model, e, 0, b_max) < e + 1) check.violating_states.push_back(e);
    }
    check.holds = check.violating_states.empty();
    return check;
}

// ---------------------------------------------------------------------------

void validate_reward(const RewardModel& reward) {
    std::visit(overloaded{
                   [](const LogSnrReward& r) {
                       if (!(r.lambda > 0.0)) throw ConfigError("log-SNR lambda must be positive");
                   },
                   [](const ShannonReward& r) {
                       if (!(r.bandwidth_hz > 0.0 && r.noise_density > 0.0 &&
                             r.channel_gain > 0.0 && r.quantum_joules > 0.0))
                           throw ConfigError("Shannon reward parameters must be positive");
                       if (!(r.slot_length > 0.0 && r.slot_length < r.frame_length))
                           throw ConfigError("Shannon reward needs 0 < delta < T");
                   },
               },
               reward);
}

double reward_value(const RewardModel& reward, double rho) {
    if (!(rho >= 0.0)) throw DomainError("Tx power must be nonnegative");
    return std::visit(overloaded{
                          [&](const LogSnrReward& r) { return std::log1p(r.lambda * rho); },
                          [&](const ShannonReward& r) {
                              const double watts = rho * r.quantum_joules / r.slot_length;
                              const double snr =
                                  r.channel_gain * watts / (r.bandwidth_hz * r.noise_density);
                              return r.slot_length / r.frame_length * r.bandwidth_hz *
                                     std::log2(1.0 + snr);
                          },
                      },
                      reward);
}

// ---------------------------------------------------------------------------

ActionSet::ActionSet(std::vector<int> actions) : actions_(std::move(actions)) {
    if (actions_.empty() || actions_.front() != 0)
        throw ConfigError("action set must start with 0");
    for (std::size_t i = 1; i < actions_.size(); ++i) {
        if (actions_[i] <= actions_[i - 1])
            throw ConfigError("action set must be strictly increasing");
    }
}

ActionSet ActionSet::range(int max, int step) {
    if (max < 0 || step < 1) throw ConfigError("action range needs max >= 0 and step >= 1");
    std::vector<int> v;
    for (int a = 0; a <= max; a += step) v.push_back(a);
    return ActionSet(std::move(v));
}

bool ActionSet::contains(int rho) const {
    return std::binary_search(actions_.begin(), actions_.end(), rho);
}

std::size_t ActionSet::index_of(int rho) const {
    const auto it = std::lower_bound(actions_.begin(), actions_.end(), rho);
    if (it == actions_.end() || *it != rho)
        throw DomainError(fmt::format("action {} is not in the action set", rho));
    return static_cast<std::size_t>(it - actions_.begin());
}

ConsumptionMap::ConsumptionMap(std::vector<ConsumptionRow> rows) : rows_(std::move(rows)) {
    if (rows_.empty()) throw ConfigError("device consumption table must have rows");
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& r = rows_[i];
        if (r.tx_quanta < 1) throw ConfigError("tabulated Tx power must be >= 1 quantum");
        if (r.consumption_quanta < r.tx_quanta)
            throw ConfigError(fmt::format("consumption {} below Tx power {}",
                                          r.consumption_quanta, r.tx_quanta));
        if (i > 0 && r.tx_quanta <= rows_[i - 1].tx_quanta)
            throw ConfigError("consumption rows must be strictly increasing in Tx power");
    }
}

int ConsumptionMap::consumption(int rho) const {
    if (rho < 0) throw DomainError("Tx power must be nonnegative");
    if (rows_.empty() || rho == 0) return rho;
    const auto it = std::lower_bound(
        rows_.begin(), rows_.end(), rho,
        [](const ConsumptionRow& r, int v) { return r.tx_quanta < v; });
    if (it == rows_.end() || it->tx_quanta != rho)
        throw DomainError(fmt::format("Tx power {} is not a device level", rho));
    return it->consumption_quanta;
}

ActionSet ConsumptionMap::natural_actions(int max_rho) const {
    if (rows_.empty()) return ActionSet::range(max_rho);
    std::vector<int> v{0};
    for (const auto& r : rows_) v.push_back(r.tx_quanta);
    return ActionSet(std::move(v));
}

double attained_reward(const RewardModel& reward, const ConsumptionMap& cons,
                       const ActionSet& actions, int rho, int e) {
    if (!actions.contains(rho))
        throw DomainError(fmt::format("action {} is not in the action set", rho));
    if (e < 0) throw DomainError("state must be nonnegative");
    if (rho == 0 || cons.consumption(rho) > e) return 0.0;
    return reward_value(reward, rho);
}

}  // namespace ehpolicy
