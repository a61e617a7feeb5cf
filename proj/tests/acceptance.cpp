// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "ehpolicy/harness.hpp"

using namespace ehpolicy;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Scenario baseline(int e_max = 100) {
    return Scenario{BatteryModel(e_max, QuadraticCapacitor{1.05}), make_truncated_geometric(20, 50),
                    ConsumptionMap{}, LogSnrReward{0.01}, ActionSet::range(e_max)};
}

double value_of(const Scenario& sc, const Policy& p) {
    const auto chain =
        build_chain(sc.battery, sc.arrivals, sc.consumption, sc.reward, sc.actions, p);
    return long_run_average(chain.transition, chain.state_reward, 0).reward;
}

bool within_rel(double got, double want, double rel) {
    return std::abs(got - want) <= rel * std::abs(want);
}

// ---------------------------------------------------------------------------

Outcome storage_curve() {
    const BatteryModel bat(100, QuadraticCapacitor{1.05});
    const double y = integrate_frame(bat, 0.0, 50);
    const int next = battery_step(bat, 0, 0, 50);
    return {std::abs(y - 6.3) <= 0.05 && next == 6,
            fmt::format("y_T(0,50)={:.4f} (6.3±0.05), step={} (6)", y, next)};
}

Outcome baseline_rewards() {
    const auto sc = baseline();
    const double rp = solve_perfect_soc(sc).long_run_reward;
    double g[4] = {};
    for (int n = 1; n <= 3; ++n)
        g[n] = search_partition_policy(sc, Partition::uniform(100, n)).best_reward;
    const bool values = within_rel(rp, 0.1714, 0.05) && within_rel(g[3], 0.1670, 0.05) &&
                        within_rel(g[2], 0.1655, 0.05) && within_rel(g[1], 0.0488, 0.05);
    const bool order = g[1] < g[2] && g[2] <= g[3] && g[3] <= rp;
    return {values && order,
            fmt::format("perfect={:.5f} N3={:.5f} N2={:.5f} N1={:.5f} (full 101-action grid), "
                        "order {}",
                        rp, g[3], g[2], g[1], order ? "ok" : "violated")};
}

Outcome zero_reward_trap() {
    const auto real = baseline();
    auto ideal = real;
    ideal.battery = real.battery.with_efficiency(ConstantEfficiency{1.0});
    const auto op_ii = search_partition_policy(ideal, Partition::uniform(100, 2)).best_policy;
    const double g = value_of(real, op_ii);
    const auto sim = simulate(real.battery, real.arrivals, real.consumption, real.reward,
                              real.actions, op_ii, 100000, 1);
    return {g == 0.0 && sim.empirical_reward == 0.0,
            fmt::format("OP_II=({}, {}) on the real battery: G={} simulated={} over 1e5 frames",
                        op_ii.action[0], op_ii.action[1], g, sim.empirical_reward)};
}

Outcome bound_dominance() {
    constexpr double slack = 1e-8;
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int scenarios = 0;
    int rejected = 0;
    int checks = 0;
    int violations = 0;
    int violations_rounding_aware = 0;
    double worst = 0.0;
    std::string first;
    while (scenarios < 60) {
        const int e_max = 10 + static_cast<int>(u(rng) * 291);
        const double beta = 1.0 + 2.0 * (1.0 - u(rng));  // (1, 3]
        const int b_max = 10 + static_cast<int>(u(rng) * 51);
        const double ratio = 0.15 + 0.6 * u(rng);
        const double lambda = std::pow(10.0, -3.0 + 3.0 * u(rng));
        const int step = std::max(1, e_max / 20);
        const Scenario sc{BatteryModel(e_max, QuadraticCapacitor{beta}),
                          make_truncated_geometric(ratio * b_max, b_max), ConsumptionMap{},
                          LogSnrReward{lambda}, ActionSet::range(e_max, step)};
        if (!validate_recharge_hypothesis(sc.battery, sc.arrivals).holds) {
            ++rejected;
            continue;
        }
        ++scenarios;

        const auto bound = upper_bound(sc.battery, sc.arrivals, sc.reward);
        const auto rp = solve_perfect_soc(sc);
        const double perfect = rp.long_run_reward;
        const auto two = Partition::uniform(e_max, 2);
        auto ideal = sc;
        ideal.battery = sc.battery.with_efficiency(ConstantEfficiency{1.0});

        std::vector<std::pair<std::string, double>> policies{
            {"op_ri N=1", search_partition_policy(sc, Partition::uniform(e_max, 1)).best_reward},
            {"op_ri N=2", search_partition_policy(sc, two).best_reward},
            {"lcp", value_of(sc, derive_lcp(rp.policy, sc.consumption, two, sc.actions))},
            {"bp", value_of(sc, derive_bp(two, bound, sc.consumption, sc.actions))},
            {"op_ii", value_of(sc, search_partition_policy(ideal, two).best_policy)},
        };
        auto note = [&](bool ok, const std::string& what, double excess) {
            ++checks;
            if (ok) return;
            ++violations;
            worst = std::max(worst, excess);
            if (first.empty()) first = what;
        };
        for (const auto& [name, g] : policies)
            note(g <= perfect + slack, fmt::format("{} > perfect at e_max={}", name, e_max),
                 (g - perfect) / perfect);
        note(perfect <= bound.g_ub + slack,
             fmt::format("perfect {:.6f} > G_ub {:.6f} (e_max={}, beta={:.3f}, b_bar={:.2f})",
                         perfect, bound.g_ub, e_max, beta, sc.arrivals.mean()),
             (perfect - bound.g_ub) / bound.g_ub);
        note(bound.g_ub <= bound.g_ideal + slack, "G_ub > g(b_bar)", 0.0);
        if (perfect > bound.g_ub_quantized + slack) ++violations_rounding_aware;
    }
    return {violations == 0,
            fmt::format("{} scenarios ({} rejected: recharge hypothesis), {} checks, {} violated "
                        "(worst {:.3g} relative){}; against the rounding-aware bound: {} violated",
                        scenarios, rejected, checks, violations, worst,
                        first.empty() ? "" : "; first: " + first, violations_rounding_aware)};
}

Outcome constant_eta() {
    double worst_beta = 0.0;
    double worst_g = 0.0;
    const auto arr = make_truncated_geometric(20, 50);
    for (double eta : {1.0, 0.9, 0.7, 0.5, 0.25}) {
        const BatteryModel bat(100, ConstantEfficiency{eta});
        for (int b = 0; b <= 50; ++b)
            worst_beta = std::max(worst_beta, std::abs(beta_star(bat, b).beta - eta * b));
        const RewardModel r = LogSnrReward{0.01};
        const auto rep = upper_bound(bat, arr, r);
        worst_g = std::max(worst_g, std::abs(rep.g_ub - reward_value(r, eta * arr.mean())));
    }
    return {worst_beta <= 1e-9 && worst_g <= 1e-9,
            fmt::format("max |beta*-eta b|={:.2e}, max |G_ub-g(eta b_bar)|={:.2e}", worst_beta,
                        worst_g)};
}

Outcome bound_collapse() {
    const auto arr = make_truncated_geometric(20, 50);
    const RewardModel r = LogSnrReward{0.01};
    const auto rep = upper_bound(BatteryModel(1000, QuadraticCapacitor{1.05}), arr, r);
    const double rel = (rep.g_ideal - rep.g_ub) / rep.g_ideal;
    return {rel <= 0.01,
            fmt::format("e_max=1000: G_ub={:.6f} g(b_bar)={:.6f} gap {:.3f}%", rep.g_ub,
                        rep.g_ideal, 100 * rel)};
}

Outcome oracle_equivalence() {
    // (a) singleton search vs RVI.
    double worst_a = 0.0;
    const std::vector<std::pair<int, std::vector<int>>> small{
        {6, {0, 2, 4, 6}}, {10, {0, 3, 6}}, {16, {0, 4}}, {20, {0, 5}}};
    for (const auto& [e_max, acts] : small) {
        Scenario sc = baseline(e_max);
        sc.battery = BatteryModel(e_max, QuadraticCapacitor{2.0});
        sc.arrivals = make_truncated_geometric(0.3 * e_max, e_max / 2);
        sc.actions = ActionSet(acts);
        SearchOptions opt;
        opt.budget = 1e7;
        const double s = search_partition_policy(sc, Partition::singletons(e_max), opt).best_reward;
        const double r = solve_perfect_soc(sc).long_run_reward;
        worst_a = std::max(worst_a, std::abs(s - r));
    }
    // (b) 3-state / 2-action toy against all 8 deterministic policies.
    const Scenario toy{BatteryModel(2, ConstantEfficiency{1.0}), ArrivalModel({0.5, 0.3, 0.2}),
                       ConsumptionMap{}, LogSnrReward{1.0}, ActionSet({0, 1})};
    double brute = -1.0;
    for (int mask = 0; mask < 8; ++mask) {
        StatePolicy p{{mask & 1, (mask >> 1) & 1, (mask >> 2) & 1}};
        brute = std::max(brute, value_of(toy, p));
    }
    const double rvi = solve_perfect_soc(toy).long_run_reward;
    const double worst_b = std::abs(brute - rvi);
    // (c) RK4 vs the tanh solution of the quadratic charging law.
    double worst_c = 0.0;
    const double beta = 1.05;
    const BatteryModel rk(100, QuadraticCapacitor{beta}, ChargingScheme::Rk4);
    const double c = 50.0;
    const double s = c * std::sqrt(beta);
    for (int i = 0; i < 100; ++i) {
        const double y0 = i * 0.99;
        const int b = 1 + (i * 7) % 50;
        const double exact = std::min(100.0, c + s * std::tanh(b / s + std::atanh((y0 - c) / s)));
        worst_c = std::max(worst_c, std::abs(integrate_frame(rk, y0, b) - exact));
    }
    return {worst_a <= 1e-8 && worst_b <= 1e-8 && worst_c <= 1e-6,
            fmt::format("(a) max |search-RVI|={:.2e} (b) |brute-RVI|={:.2e} (c) max |RK4-exact|={:.2e}",
                        worst_a, worst_b, worst_c)};
}

Outcome monte_carlo() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int ok = 0;
    double worst = 0.0;
    int done = 0;
    while (done < 10) {
        const int e_max = 10 + static_cast<int>(u(rng) * 141);
        const int b_max = 10 + static_cast<int>(u(rng) * 41);
        const Scenario sc{BatteryModel(e_max, QuadraticCapacitor{1.0 + 2.0 * (1.0 - u(rng))}),
                          make_truncated_geometric((0.15 + 0.6 * u(rng)) * b_max, b_max),
                          ConsumptionMap{}, LogSnrReward{std::pow(10.0, -3.0 + 3.0 * u(rng))},
                          ActionSet::range(e_max)};
        if (!validate_recharge_hypothesis(sc.battery, sc.arrivals).holds) continue;
        const auto sol = solve_perfect_soc(sc);
        const auto rep = simulate(sc.battery, sc.arrivals, sc.consumption, sc.reward, sc.actions,
                                  sol.policy, 1'000'000, 1000 + done);
        const double z = rep.std_error > 0
                             ? std::abs(rep.empirical_reward - sol.long_run_reward) / rep.std_error
                             : (rep.empirical_reward == sol.long_run_reward ? 0.0 : INFINITY);
        worst = std::max(worst, z);
        ok += z <= 3.0;
        ++done;
    }
    return {ok == 10, fmt::format("{}/10 scenarios within 3 SE at K=1e6 (worst {:.2f} SE)", ok, worst)};
}

Outcome figure_shapes() {
    const auto dir = std::filesystem::temp_directory_path() / "ehpolicy_acceptance";
    std::filesystem::remove_all(dir);

    auto fig4 = preset("fig4");
    fig4.simulation_frames = 0;
    const auto rows4 = run_sweep(fig4, {dir / "fig4", 1, "sweep"}).rows;
    std::map<int, std::map<std::string, double>> g4;
    bool clean = true;
    for (const auto& r : rows4) {
        g4[r.e_max][r.policy] = r.g_analytic;
        clean = clean && r.error.empty();
    }
    bool lcp_collapse = true;
    bool lcp_close = true;
    bool bp_close = true;
    std::string lcp_fail;
    for (const auto& [e, g] : g4) {
        const double ri = g.at("op_ri");
        if (e >= 2 * 100 && !(g.at("lcp") < 0.25 * ri)) {
            lcp_collapse = false;
            lcp_fail += fmt::format(" e_max={}: LCP={:.4f} vs OP_RI={:.4f};", e, g.at("lcp"), ri);
        }
        if (e <= 30 && !within_rel(g.at("lcp"), ri, 0.25)) lcp_close = false;
        if (!within_rel(g.at("bp"), ri, 0.15)) bp_close = false;
    }

    auto fig5 = preset("fig5");
    fig5.simulation_frames = 0;
    const auto rows5 = run_sweep(fig5, {dir / "fig5", 1, "sweep"}).rows;
    bool band_order = true;
    std::map<std::pair<std::string, int>, double> g315;
    for (const auto& r : rows5) {
        clean = clean && r.error.empty();
        if (r.scenario.ends_with("315MHz")) g315[{r.policy, r.e_max}] = r.g_analytic;
    }
    for (const auto& r : rows5)
        if (r.g_analytic > g315.at({r.policy, r.e_max}) + 1e-9) band_order = false;

    const bool pass = clean && lcp_collapse && lcp_close && bp_close && band_order;
    return {pass,
            fmt::format("LCP<25% of OP_RI at e_max>=200: {}{}; LCP within 25% at e_max<=30: {}; "
                        "BP within 15% everywhere: {}; 315MHz >= other bands: {}; row errors: {}",
                        lcp_collapse ? "yes" : "NO", lcp_fail, lcp_close ? "yes" : "NO",
                        bp_close ? "yes" : "NO", band_order ? "yes" : "NO", clean ? "none" : "some")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"storage curve regression", storage_curve},
        {"baseline reward regression", baseline_rewards},
        {"zero-reward trap", zero_reward_trap},
        {"bound dominance suite", bound_dominance},
        {"constant-eta analytics", constant_eta},
        {"asymptotic bound collapse", bound_collapse},
        {"oracle equivalence", oracle_equivalence},
        {"Monte Carlo consistency", monte_carlo},
        {"figure 4/5 qualitative shape", figure_shapes},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::cout << fmt::format("[{}] {}. {} ({:.1f} s): {}", o.pass ? "PASS" : "FAIL", i + 1,
                                 criteria[i].first, secs, o.detail)
                  << std::endl;
    }
    std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size())
              << std::endl;
    return failed == 0 ? 0 : 1;
}
