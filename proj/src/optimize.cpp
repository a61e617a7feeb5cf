#include "ehpolicy/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ehpolicy/detail/parallel.hpp"

namespace ehpolicy {

// ---------------------------------------------------------------------------
// Relative value iteration
// ---------------------------------------------------------------------------

PerfectSocSolution solve_perfect_soc(const Scenario& sc, const RviOptions& opt) {
    const int e_max = sc.battery.e_max();
    const int n = e_max + 1;
    const auto n_actions = sc.actions.size();
    if (!(opt.tau > 0.0 && opt.tau <= 1.0)) throw ConfigError("RVI tau must lie in (0, 1]");

    PerfectSocSolution sol;
    const auto recharge = validate_recharge_hypothesis(sc.battery, sc.arrivals);
    if (!recharge.holds) {
        sol.warnings.push_back(fmt::format(
            "recharge hypothesis fails for {} state(s) (first: {}); the MDP may not be "
            "communicating",
            recharge.violating_states.size(), recharge.violating_states.front()));
    }

    const ChargeKernel kernel(sc.battery, sc.arrivals);
    std::vector<int> drain(n_actions);
    std::vector<double> gain_of(n_actions);
    for (std::size_t k = 0; k < n_actions; ++k) {
        drain[k] = sc.consumption.consumption(sc.actions[k]);
        gain_of[k] = reward_value(sc.reward, sc.actions[k]);
    }

    std::vector<double> h(n, 0.0), next(n), expected(n);
    std::vector<int> arg(n, 0);
    double span = std::numeric_limits<double>::infinity();
    for (long sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
        for (int a = 0; a <= e_max; ++a) {
            double acc = 0.0;
            for (const auto& [j, p] : kernel.row(a)) acc += p * h[j];
            expected[a] = acc;
        }
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            int best_k = 0;
            for (std::size_t k = 0; k < n_actions; ++k) {
                const bool ok = drain[k] <= s;
                const double q = (ok ? gain_of[k] : 0.0) +
                                 opt.tau * expected[ok ? s - drain[k] : 0];
                if (k == 0 || q > best + 1e-12 * (1.0 + std::abs(best))) {
                    best = q;
                    best_k = static_cast<int>(k);
                }
            }
            next[s] = best + (1.0 - opt.tau) * h[s];
            arg[s] = best_k;
            const double d = next[s] - h[s];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        span = hi - lo;
        for (int s = 0; s < n; ++s) h[s] = next[s] - next[0];
        if (span < opt.span_tolerance) {
            sol.sweeps = sweep;
            sol.gain = 0.5 * (hi + lo);
            sol.policy.action.resize(n);
            for (int s = 0; s < n; ++s) sol.policy.action[s] = sc.actions[arg[s]];
            const auto chain =
                build_chain(kernel, sc.consumption, sc.reward, sc.actions, sol.policy.action);
            sol.long_run_reward =
                long_run_average(chain.transition, chain.state_reward, opt.e0).reward;
            return sol;
        }
    }
    std::string why;
    for (const auto& w : sol.warnings) why += "; " + w;
    throw ConvergenceError(
        fmt::format("relative value iteration stopped after {} sweeps with span {:.3e}{}",
                    opt.max_sweeps, span, why),
        span);
}

// ---------------------------------------------------------------------------
// Exhaustive partition search
// ---------------------------------------------------------------------------

SearchResult search_partition_policy(const Scenario& sc, const Partition& partition,
                                     const SearchOptions& opt) {
    const int e_max = sc.battery.e_max();
    if (partition.e_max() != e_max)
        throw ConfigError(fmt::format("partition covers e_max={}, battery has e_max={}",
                                      partition.e_max(), e_max));
    const int n_subsets = partition.size();
    const auto n_actions = sc.actions.size();
    const double total_d = std::pow(static_cast<double>(n_actions), n_subsets);
    if (total_d > opt.budget) {
        throw BudgetError(fmt::format(
            "exhaustive search needs {:.3g} evaluations (|A|={}, N={}), budget is {:.3g}; "
            "coarsen the action grid or reduce N",
            total_d, n_actions, n_subsets, opt.budget));
    }
    const auto total = static_cast<std::size_t>(std::llround(total_d));

    const ChargeKernel kernel(sc.battery, sc.arrivals);
    const int n = e_max + 1;
    // Per (state, action index): landing level after the transmission and reward.
    std::vector<int> level(static_cast<std::size_t>(n) * n_actions);
    std::vector<double> gain(level.size());
    for (int e = 0; e < n; ++e)
        for (std::size_t k = 0; k < n_actions; ++k) {
            const auto idx = static_cast<std::size_t>(e) * n_actions + k;
            level[idx] = std::max(0, e - sc.consumption.consumption(sc.actions[k]));
            gain[idx] = attained_reward(sc.reward, sc.consumption, sc.actions, sc.actions[k], e);
        }

    auto decode = [&](std::size_t index, std::vector<int>& digits) {
        for (int t = n_subsets - 1; t >= 0; --t) {
            digits[t] = static_cast<int>(index % n_actions);
            index /= n_actions;
        }
    };

    struct Best {
        double reward = -std::numeric_limits<double>::infinity();
        std::size_t index = std::numeric_limits<std::size_t>::max();
        void offer(double r, std::size_t i) {
            if (r > reward || (r == reward && i < index)) {
                reward = r;
                index = i;
            }
        }
    };

    const int workers = std::max(1, opt.threads);
    std::vector<Best> best(static_cast<std::size_t>(workers));
    std::vector<std::pair<std::vector<int>, double>> table;
    if (opt.keep_table) table.resize(total);

    detail::parallel_chunks(total, workers, 64, [&](int w, std::size_t begin, std::size_t end) {
        std::vector<int> digits(n_subsets);
        Eigen::MatrixXd P(n, n);
        Eigen::VectorXd r(n);
        for (std::size_t index = begin; index < end; ++index) {
            decode(index, digits);
            P.setZero();
            for (int t = 0; t < n_subsets; ++t) {
                const auto k = static_cast<std::size_t>(digits[t]);
                for (int e = partition.first(t); e <= partition.last(t); ++e) {
                    const auto idx = static_cast<std::size_t>(e) * n_actions + k;
                    r[e] = gain[idx];
                    for (const auto& [j, p] : kernel.row(level[idx])) P(e, j) += p;
                }
            }
            const double g = long_run_average(P, r, opt.e0).reward;
            best[w].offer(g, index);
            if (opt.keep_table) {
                std::vector<int> acts(n_subsets);
                for (int t = 0; t < n_subsets; ++t) acts[t] = sc.actions[digits[t]];
                table[index] = {std::move(acts), g};
            }
        }
    });

    Best overall;
    for (const auto& b : best) overall.offer(b.reward, b.index);
    std::vector<int> digits(n_subsets);
    decode(overall.index, digits);
    std::vector<int> acts(n_subsets);
    for (int t = 0; t < n_subsets; ++t) acts[t] = sc.actions[digits[t]];
    return SearchResult{PartitionPolicy{partition, std::move(acts)}, overall.reward,
                        static_cast<long>(total), std::move(table)};
}

// ---------------------------------------------------------------------------
// Upper bound
// ---------------------------------------------------------------------------

BetaStar beta_star(const BatteryModel& battery, int b) {
    if (b < 0) throw DomainError("arrivals must be nonnegative");
    if (b == 0) return {0.0, 0.0};
    const double e_max = battery.e_max();
    auto stored = [&](double a) { return integrate_frame_unsaturated(battery, a, b) - a; };

    const int grid = std::max(64, 4 * battery.e_max());
    const double step = e_max / grid;
    BetaStar best{0.0, stored(0.0)};
    for (int i = 1; i <= grid; ++i) {
        const double a = std::min(e_max, i * step);
        const double v = stored(a);
        if (v > best.beta) best = {a, v};
    }

    // Golden-section refinement around the best grid point.
    constexpr double inv_phi = 0.6180339887498949;
    double lo = std::max(0.0, best.a_star - step);
    double hi = std::min(e_max, best.a_star + step);
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = stored(x1);
    double f2 = stored(x2);
    for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = stored(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = stored(x1);
        }
    }
    const double a = 0.5 * (lo + hi);
    const double v = stored(a);
    if (v > best.beta) best = {a, v};
    return best;
}

BoundReport upper_bound(const BatteryModel& battery, const ArrivalModel& arrivals,
                        const RewardModel& reward) {
    BoundReport rep;
    const int b_max = arrivals.b_max();
    rep.beta_star_table.resize(static_cast<std::size_t>(b_max) + 1);
    rep.a_star_table.resize(rep.beta_star_table.size());
    for (int b = 0; b <= b_max; ++b) {
        const auto bs = beta_star(battery, b);
        rep.beta_star_table[b] = bs.beta;
        rep.a_star_table[b] = bs.a_star;
        rep.b_bar_s += arrivals.pmf(b) * bs.beta;
    }
    rep.g_ub = reward_value(reward, rep.b_bar_s);

    rep.beta_star_quantized_table.assign(rep.beta_star_table.size(), 0.0);
    for (int b = 1; b <= b_max; ++b) {
        int best = 0;
        for (int a = 0; a <= battery.e_max(); ++a)
            best = std::max(best,
                            round_quanta(integrate_frame_unsaturated(battery, a, b)) - a);
        rep.beta_star_quantized_table[b] = best;
        rep.b_bar_s_quantized += arrivals.pmf(b) * best;
    }
    rep.g_ub_quantized = reward_value(reward, rep.b_bar_s_quantized);
    rep.g_ideal = reward_value(reward, arrivals.mean());
    return rep;
}

// ---------------------------------------------------------------------------
// Heuristics
// ---------------------------------------------------------------------------

int nearest_action_by_consumption(double target, const ConsumptionMap& cons,
                                  const ActionSet& actions) {
    int chosen = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int rho : actions.values()) {
        const double d = std::abs(cons.consumption(rho) - target);
        if (d < best) {
            best = d;
            chosen = rho;
        }
    }
    return chosen;
}

PartitionPolicy derive_lcp(const StatePolicy& op_rp, const ConsumptionMap& cons,
                           const Partition& partition, const ActionSet& actions) {
    if (static_cast<int>(op_rp.action.size()) != partition.e_max() + 1)
        throw ConfigError("LCP: state policy and partition cover different state spaces");
    PartitionPolicy lcp{partition, std::vector<int>(static_cast<std::size_t>(partition.size()))};
    for (int t = 0; t < partition.size(); ++t) {
        double sum = 0.0;
        for (int e = partition.first(t); e <= partition.last(t); ++e)
            sum += cons.consumption(op_rp.action[e]);
        lcp.action[t] =
            nearest_action_by_consumption(sum / partition.subset_size(t), cons, actions);
    }
    return lcp;
}

PartitionPolicy derive_bp(const Partition& partition, const BoundReport& bound,
                          const ConsumptionMap& cons, const ActionSet& actions) {
    if (partition.size() != 2)
        throw UnsupportedPartitionError(fmt::format(
            "balanced policy is defined for LOW/HIGH partitions only (got N={})",
            partition.size()));
    return PartitionPolicy{partition,
                           {0, nearest_action_by_consumption(bound.b_bar_s, cons, actions)}};
}

}  // namespace ehpolicy
