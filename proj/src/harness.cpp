#include "ehpolicy/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <Eigen/Core>
#include <fmt/format.h>
#include <openssl/evp.h>

#include "ehpolicy/detail/parallel.hpp"

namespace ehpolicy {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t a, std::size_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& content,
                RunSummary& summary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
    out << content;
    if (!out) throw ConfigError(fmt::format("write failed for '{}'", path.string()));
    summary.files.push_back(path);
}

void prepare_out_dir(const RunOptions& opt) {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (ec)
        throw ConfigError(
            fmt::format("cannot create output directory '{}': {}", opt.out_dir.string(), ec.message()));
}

std::string state_policy_csv(const StatePolicy& p, const ConsumptionMap& cons) {
    std::string s = "state,action,consumption\n";
    for (std::size_t e = 0; e < p.action.size(); ++e)
        s += fmt::format("{},{},{}\n", e, p.action[e], cons.consumption(p.action[e]));
    return s;
}

std::string partition_policy_csv(const PartitionPolicy& p, const ConsumptionMap& cons) {
    std::string s = "subset,first_state,last_state,action,consumption\n";
    for (int t = 0; t < p.partition.size(); ++t)
        s += fmt::format("{},{},{},{},{}\n", t, p.partition.first(t), p.partition.last(t),
                         p.action[t], cons.consumption(p.action[t]));
    return s;
}

std::string policy_csv(const Policy& p, const ConsumptionMap& cons) {
    if (const auto* sp = std::get_if<StatePolicy>(&p)) return state_policy_csv(*sp, cons);
    return partition_policy_csv(std::get<PartitionPolicy>(p), cons);
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::string s = result_csv_header();
    for (const auto& r : rows) s += format_result_row(r);
    return s;
}

double evaluate(const Scenario& sc, const Policy& policy, int e0) {
    const auto chain = build_chain(sc.battery, sc.arrivals, sc.consumption, sc.reward,
                                   sc.actions, policy);
    return long_run_average(chain.transition, chain.state_reward, e0).reward;
}

int subsets_of(const Policy& p, int e_max) {
    if (const auto* pp = std::get_if<PartitionPolicy>(&p)) return pp->partition.size();
    return e_max + 1;
}

/// Fills the analytic and (optionally) simulated columns of a row.
void fill_row(ResultRow& row, const ScenarioConfig& cfg, const Scenario& sc,
              const Policy& policy, std::uint64_t seed) {
    row.g_analytic = evaluate(sc, policy, cfg.e0);
    if (cfg.simulation_frames > 0) {
        const auto rep = simulate(sc.battery, sc.arrivals, sc.consumption, sc.reward, sc.actions,
                                  policy, cfg.simulation_frames, seed, cfg.e0);
        row.g_simulated = rep.empirical_reward;
        row.std_error = rep.std_error;
    }
}

ScenarioConfig at_point(const ScenarioConfig& cfg, int e_max, const std::string& band) {
    ScenarioConfig c = cfg;
    c.battery.e_max = e_max;
    if (!band.empty()) c.consumption.band = band;
    // An explicit partition only makes sense for the configured battery size.
    if (e_max != cfg.battery.e_max) c.partition.starts.clear();
    return c;
}

ScenarioConfig with_profile(const ScenarioConfig& cfg, const EfficiencyProfile& profile) {
    ScenarioConfig c = cfg;
    c.battery.efficiency = profile;
    return c;
}

std::string manifest_text(const ScenarioConfig& cfg, const RunOptions& opt,
                          const RunSummary& summary) {
    std::string s;
    s += fmt::format("tool: ehpolicy {}\n", library_version());
    s += fmt::format("command: {}\n", opt.command.empty() ? "-" : opt.command);
    s += fmt::format("scenario: {}\n", cfg.id);
    s += fmt::format("config_sha256: {}\n", sha256_hex(serialize_config(cfg)));
    s += fmt::format("seed: {}\n", cfg.seed);
    s += fmt::format("threads: {}\n", opt.threads);
    s += fmt::format("eigen: {}.{}.{}\n", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION,
                     EIGEN_MINOR_VERSION);
    s += fmt::format("fmt: {}.{}.{}\n", FMT_VERSION / 10000, FMT_VERSION / 100 % 100,
                     FMT_VERSION % 100);
#if defined(__clang__)
    s += fmt::format("compiler: clang {}\n", __clang_version__);
#elif defined(__GNUC__)
    s += fmt::format("compiler: gcc {}.{}.{}\n", __GNUC__, __GNUC_MINOR__, __GNUC_PATCHLEVEL__);
#endif
    for (const auto& f : summary.files) s += fmt::format("output: {}\n", f.filename().string());
    return s;
}

void finish(const ScenarioConfig& cfg, const RunOptions& opt, RunSummary& summary) {
    const auto path = opt.out_dir / "run_manifest.txt";
    write_file(path, manifest_text(cfg, opt, summary), summary);
}

std::vector<int> subset_list(const ScenarioConfig& cfg) {
    if (!cfg.sweep.subsets.empty()) return cfg.sweep.subsets;
    return {cfg.partition.starts.empty() ? cfg.partition.subsets
                                         : static_cast<int>(cfg.partition.starts.size())};
}

Partition partition_for(const ScenarioConfig& cfg, int n) {
    if (!cfg.partition.starts.empty() && static_cast<int>(cfg.partition.starts.size()) == n)
        return Partition(cfg.battery.e_max, cfg.partition.starts);
    return Partition::uniform(cfg.battery.e_max, n);
}

const std::set<std::string> kSweepPolicies{"op_ri", "op_rp", "op_ip", "op_ii", "lcp", "bp"};

}  // namespace

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

std::string format_number(double x) { return fmt::format("{}", x); }

std::string result_csv_header() {
    return "scenario,e_max,n_subsets,policy,g_analytic,g_simulated,std_error,g_ub,g_ideal,"
           "wall_time_s,error\n";
}

std::string format_result_row(const ResultRow& r) {
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.scenario), r.e_max,
                       r.n_subsets, csv_field(r.policy), format_number(r.g_analytic),
                       opt(r.g_simulated), opt(r.std_error), format_number(r.g_ub),
                       format_number(r.g_ideal), fmt::format("{:.6f}", r.wall_time_s),
                       csv_field(r.error));
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw NumericError("SHA-256 digest failed");
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string library_version() { return EHPOLICY_VERSION; }

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

BatteryModel make_battery(const ScenarioConfig& c) {
    if (c.battery.e_max < 1)
        throw ConfigError(fmt::format("config field '/battery/e_max': {} must be >= 1", c.battery.e_max));
    try {
        return BatteryModel(c.battery.e_max, c.battery.efficiency, c.battery.scheme,
                            c.battery.frame_length, c.battery.slot_length,
                            c.battery.integration_steps);
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config field '/battery': {}", e.what()));
    }
}

ArrivalModel make_arrivals(const ScenarioConfig& c) {
    try {
        switch (c.arrivals.family) {
            case ArrivalFamily::Geometric:
                return make_truncated_geometric(c.arrivals.mean, c.arrivals.b_max);
            case ArrivalFamily::Poisson:
                return make_truncated_poisson(c.arrivals.mean, c.arrivals.b_max);
            case ArrivalFamily::Explicit:
                return ArrivalModel(c.arrivals.pmf);
        }
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config field '/arrivals': {}", e.what()));
    }
    throw ConfigError("config field '/arrivals/family': unsupported");
}

RewardModel make_reward(const ScenarioConfig& c) {
    RewardModel r;
    if (c.reward.family == RewardFamily::LogSnr) {
        r = LogSnrReward{c.reward.lambda};
    } else {
        r = ShannonReward{c.reward.bandwidth_hz, c.reward.noise_density, c.reward.channel_gain,
                          c.battery.slot_length,  c.battery.frame_length, c.battery.quantum_joules};
    }
    try {
        validate_reward(r);
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config field '/reward': {}", e.what()));
    }
    return r;
}

ConsumptionMap make_consumption(const ScenarioConfig& c) {
    try {
        switch (c.consumption.kind) {
            case ConsumptionKind::Identity:
                return ConsumptionMap{};
            case ConsumptionKind::Device:
                return ConsumptionMap(device_rows(c.consumption.band, c.battery.slot_length,
                                                  c.battery.quantum_joules));
            case ConsumptionKind::Table:
                return ConsumptionMap(c.consumption.rows);
        }
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config field '/consumption': {}", e.what()));
    }
    throw ConfigError("config field '/consumption/kind': unsupported");
}

ActionSet make_actions(const ScenarioConfig& c, const ConsumptionMap& cons) {
    try {
        if (!c.actions.values.empty()) {
            ActionSet set(c.actions.values);
            for (int rho : set.values()) (void)cons.consumption(rho);
            return set;
        }
        if (!cons.is_identity()) return cons.natural_actions(c.battery.e_max);
        const int top = std::min(c.actions.max.value_or(c.battery.e_max), c.battery.e_max);
        return ActionSet::range(top, c.actions.step);
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config field '/actions': {}", e.what()));
    }
}

Partition make_partition(const ScenarioConfig& c) {
    try {
        if (!c.partition.starts.empty()) return Partition(c.battery.e_max, c.partition.starts);
        return Partition::uniform(c.battery.e_max, c.partition.subsets);
    } catch (const std::exception& e) {
        throw ConfigError(fmt::format("config field '/partition': {}", e.what()));
    }
}

Scenario make_scenario(const ScenarioConfig& c) {
    // Battery first: actions and partitions are derived from e_max.
    auto battery = make_battery(c);
    auto cons = make_consumption(c);
    auto actions = make_actions(c, cons);
    return Scenario{std::move(battery), make_arrivals(c), std::move(cons), make_reward(c),
                    std::move(actions)};
}

void check_config(const ScenarioConfig& c) {
    const auto sc = make_scenario(c);
    (void)make_partition(c);
    if (c.e0 < 0 || c.e0 > c.battery.e_max)
        throw ConfigError(fmt::format("config field '/e0': {} outside 0..{}", c.e0, c.battery.e_max));
    if (c.simulation_frames < 0)
        throw ConfigError("config field '/simulation_frames': must be >= 0");
    if (!(c.search_budget >= 1.0))
        throw ConfigError("config field '/search_budget': must be >= 1");
    if (c.policy.source == PolicySource::CrossApply) {
        if (c.policy.cross_inner == PolicySource::CrossApply ||
            c.policy.cross_inner == PolicySource::Fixed)
            throw ConfigError(
                "config field '/policy/cross_inner': must be solve, search, lcp or bp");
        try {
            validate_profile(c.policy.cross_profile);
        } catch (const std::exception& e) {
            throw ConfigError(fmt::format("config field '/policy/cross_profile': {}", e.what()));
        }
    }
    if (c.policy.source == PolicySource::Fixed) {
        const auto n = static_cast<int>(c.policy.fixed_actions.size());
        if (n != make_partition(c).size() && n != c.battery.e_max + 1)
            throw ConfigError(fmt::format(
                "config field '/policy/fixed_actions': expected {} (per subset) or {} (per "
                "state) entries, got {}",
                make_partition(c).size(), c.battery.e_max + 1, n));
        for (std::size_t i = 0; i < c.policy.fixed_actions.size(); ++i)
            if (!sc.actions.contains(c.policy.fixed_actions[i]))
                throw ConfigError(fmt::format(
                    "config field '/policy/fixed_actions/{}': {} is not in the action set", i,
                    c.policy.fixed_actions[i]));
    }
    for (std::size_t i = 0; i < c.sweep.e_max.size(); ++i)
        if (c.sweep.e_max[i] < 1)
            throw ConfigError(fmt::format("config field '/sweep/e_max/{}': must be >= 1", i));
    for (std::size_t i = 0; i < c.sweep.subsets.size(); ++i)
        if (c.sweep.subsets[i] < 1)
            throw ConfigError(fmt::format("config field '/sweep/subsets/{}': must be >= 1", i));
    const auto bands = device_bands();
    for (std::size_t i = 0; i < c.sweep.bands.size(); ++i) {
        if (c.consumption.kind != ConsumptionKind::Device)
            throw ConfigError("config field '/sweep/bands': needs device consumption");
        if (std::find(bands.begin(), bands.end(), c.sweep.bands[i]) == bands.end())
            throw ConfigError(fmt::format("config field '/sweep/bands/{}': unknown band \"{}\"",
                                          i, c.sweep.bands[i]));
    }
    for (std::size_t i = 0; i < c.sweep.policies.size(); ++i)
        if (!kSweepPolicies.contains(c.sweep.policies[i]))
            throw ConfigError(fmt::format(
                "config field '/sweep/policies/{}': unknown policy \"{}\" (expected op_ri, "
                "op_rp, op_ip, op_ii, lcp or bp)",
                i, c.sweep.policies[i]));
}

Policy build_configured_policy(const ScenarioConfig& c, const Scenario& sc) {
    const auto partition = make_partition(c);
    switch (c.policy.source) {
        case PolicySource::Solve:
            return solve_perfect_soc(sc, RviOptions{.e0 = c.e0}).policy;
        case PolicySource::Search:
            return search_partition_policy(sc, partition,
                                           SearchOptions{.e0 = c.e0, .budget = c.search_budget})
                .best_policy;
        case PolicySource::Lcp: {
            const auto rp = solve_perfect_soc(sc, RviOptions{.e0 = c.e0});
            return derive_lcp(rp.policy, sc.consumption, partition, sc.actions);
        }
        case PolicySource::Bp:
            return derive_bp(partition, upper_bound(sc.battery, sc.arrivals, sc.reward),
                             sc.consumption, sc.actions);
        case PolicySource::Fixed: {
            const auto& a = c.policy.fixed_actions;
            if (static_cast<int>(a.size()) == partition.size()) return PartitionPolicy{partition, a};
            if (static_cast<int>(a.size()) == sc.battery.e_max() + 1) return StatePolicy{a};
            throw ConfigError("config field '/policy/fixed_actions': wrong length");
        }
        case PolicySource::CrossApply: {
            auto inner = with_profile(c, c.policy.cross_profile);
            inner.policy.source = c.policy.cross_inner;
            if (inner.policy.source == PolicySource::CrossApply ||
                inner.policy.source == PolicySource::Fixed)
                throw ConfigError("config field '/policy/cross_inner': unsupported source");
            return build_configured_policy(inner, make_scenario(inner));
        }
    }
    throw ConfigError("config field '/policy/source': unsupported");
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

RunSummary run_solve(const ScenarioConfig& cfg, const RunOptions& opt) {
    check_config(cfg);
    prepare_out_dir(opt);
    RunSummary out;
    const auto sc = make_scenario(cfg);
    const auto bound = upper_bound(sc.battery, sc.arrivals, sc.reward);
    auto base_row = [&](std::string name) {
        ResultRow r;
        r.scenario = cfg.id;
        r.e_max = cfg.battery.e_max;
        r.n_subsets = cfg.battery.e_max + 1;
        r.policy = std::move(name);
        r.g_ub = bound.g_ub;
        r.g_ideal = bound.g_ideal;
        return r;
    };

    auto t0 = Clock::now();
    const auto rp = solve_perfect_soc(sc, RviOptions{.e0 = cfg.e0});
    for (const auto& w : rp.warnings) out.messages.push_back(w);
    write_file(opt.out_dir / "policy_op_rp.csv", state_policy_csv(rp.policy, sc.consumption), out);
    auto row = base_row("op_rp");
    fill_row(row, cfg, sc, rp.policy, derive_seed(cfg.seed, 0, 0));
    row.wall_time_s = seconds_since(t0);
    out.rows.push_back(row);

    if (cfg.include_ideal) {
        t0 = Clock::now();
        const auto ideal_cfg = with_profile(cfg, ConstantEfficiency{1.0});
        const auto ideal = make_scenario(ideal_cfg);
        const auto ip = solve_perfect_soc(ideal, RviOptions{.e0 = cfg.e0});
        write_file(opt.out_dir / "policy_op_ip.csv", state_policy_csv(ip.policy, sc.consumption),
                   out);
        auto on_ideal = base_row("op_ip");
        fill_row(on_ideal, cfg, ideal, ip.policy, derive_seed(cfg.seed, 0, 1));
        on_ideal.wall_time_s = seconds_since(t0);
        out.rows.push_back(on_ideal);

        t0 = Clock::now();
        auto cross = base_row("op_ip_on_real");
        fill_row(cross, cfg, sc, ip.policy, derive_seed(cfg.seed, 0, 2));
        cross.wall_time_s = seconds_since(t0);
        out.rows.push_back(cross);
    }
    write_file(opt.out_dir / "results.csv", results_csv(out.rows), out);
    finish(cfg, opt, out);
    return out;
}

RunSummary run_search(const ScenarioConfig& cfg, const RunOptions& opt) {
    check_config(cfg);
    prepare_out_dir(opt);
    RunSummary out;
    const auto sc = make_scenario(cfg);
    const auto bound = upper_bound(sc.battery, sc.arrivals, sc.reward);
    const auto ns = subset_list(cfg);
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const auto t0 = Clock::now();
        const auto partition = partition_for(cfg, ns[i]);
        const auto res = search_partition_policy(
            sc, partition,
            SearchOptions{.e0 = cfg.e0, .budget = cfg.search_budget, .threads = opt.threads});
        write_file(opt.out_dir / fmt::format("policy_op_ri_N{}.csv", ns[i]),
                   partition_policy_csv(res.best_policy, sc.consumption), out);
        ResultRow row;
        row.scenario = cfg.id;
        row.e_max = cfg.battery.e_max;
        row.n_subsets = ns[i];
        row.policy = "op_ri";
        row.g_ub = bound.g_ub;
        row.g_ideal = bound.g_ideal;
        fill_row(row, cfg, sc, res.best_policy, derive_seed(cfg.seed, i, 0));
        row.wall_time_s = seconds_since(t0);
        out.rows.push_back(row);
        std::string acts;
        for (int a : res.best_policy.action) acts += fmt::format("{}{}", acts.empty() ? "" : " ", a);
        out.messages.push_back(fmt::format("N={}: actions [{}], G={}", ns[i], acts,
                                           format_number(res.best_reward)));
    }
    write_file(opt.out_dir / "results.csv", results_csv(out.rows), out);
    finish(cfg, opt, out);
    return out;
}

RunSummary run_sweep(const ScenarioConfig& cfg, const RunOptions& opt) {
    check_config(cfg);
    prepare_out_dir(opt);

    const std::vector<int> e_maxes =
        cfg.sweep.e_max.empty() ? std::vector<int>{cfg.battery.e_max} : cfg.sweep.e_max;
    const std::vector<std::string> bands =
        cfg.sweep.bands.empty() ? std::vector<std::string>{""} : cfg.sweep.bands;
    const std::vector<std::string> policies =
        cfg.sweep.policies.empty() ? std::vector<std::string>{"op_ri", "bp", "lcp", "op_ii", "op_rp"}
                                   : cfg.sweep.policies;
    const auto ns = subset_list(cfg);

    struct Point {
        std::string band;
        int e_max;
    };
    std::vector<Point> points;
    for (const auto& band : bands)
        for (int e : e_maxes) points.push_back({band, e});

    std::vector<std::vector<ResultRow>> rows(points.size());
    const int inner_threads = points.size() == 1 ? opt.threads : 1;

    detail::parallel_chunks(points.size(), opt.threads, 1, [&](int, std::size_t begin, std::size_t end) {
        for (std::size_t pi = begin; pi < end; ++pi) {
            const auto& pt = points[pi];
            const auto pc = at_point(cfg, pt.e_max, pt.band);
            const std::string id = pt.band.empty() ? cfg.id : fmt::format("{}/{}", cfg.id, pt.band);
            auto& out = rows[pi];

            ResultRow proto;
            proto.scenario = id;
            proto.e_max = pt.e_max;

            std::optional<Scenario> sc;
            std::optional<BoundReport> bound;
            try {
                sc = make_scenario(pc);
                bound = upper_bound(sc->battery, sc->arrivals, sc->reward);
                proto.g_ub = bound->g_ub;
                proto.g_ideal = bound->g_ideal;
            } catch (const std::exception& e) {
                proto.policy = "*";
                proto.error = e.what();
                out.push_back(proto);
                continue;
            }

            // Shared, computed on first use.
            std::optional<PerfectSocSolution> rp;
            std::optional<Scenario> ideal;
            auto get_rp = [&]() -> const PerfectSocSolution& {
                if (!rp) rp = solve_perfect_soc(*sc, RviOptions{.e0 = pc.e0});
                return *rp;
            };
            auto get_ideal = [&]() -> const Scenario& {
                if (!ideal) ideal = make_scenario(with_profile(pc, ConstantEfficiency{1.0}));
                return *ideal;
            };
            const SearchOptions sopt{.e0 = pc.e0, .budget = pc.search_budget,
                                     .threads = inner_threads};

            std::size_t slot = 0;
            auto emit = [&](const std::string& name, int n, auto&& make_policy) {
                ResultRow row = proto;
                row.policy = name;
                row.n_subsets = n;
                const auto t0 = Clock::now();
                try {
                    const Policy policy = make_policy();
                    fill_row(row, pc, *sc, policy, derive_seed(pc.seed, pi, slot));
                } catch (const std::exception& e) {
                    row.g_analytic = 0.0;
                    row.g_simulated.reset();
                    row.std_error.reset();
                    row.error = e.what();
                }
                row.wall_time_s = seconds_since(t0);
                out.push_back(std::move(row));
                ++slot;
            };

            for (const auto& name : policies) {
                if (name == "op_rp") {
                    emit(name, pt.e_max + 1, [&]() -> Policy { return get_rp().policy; });
                } else if (name == "op_ip") {
                    emit(name, pt.e_max + 1, [&]() -> Policy {
                        return solve_perfect_soc(get_ideal(), RviOptions{.e0 = pc.e0}).policy;
                    });
                } else {
                    for (int n : ns) {
                        emit(name, n, [&]() -> Policy {
                            const auto part = Partition::uniform(pt.e_max, n);
                            if (name == "op_ri")
                                return search_partition_policy(*sc, part, sopt).best_policy;
                            if (name == "op_ii")
                                return search_partition_policy(get_ideal(), part, sopt).best_policy;
                            if (name == "lcp")
                                return derive_lcp(get_rp().policy, sc->consumption, part, sc->actions);
                            return derive_bp(part, *bound, sc->consumption, sc->actions);
                        });
                    }
                }
            }
        }
    });

    RunSummary out;
    for (auto& r : rows)
        for (auto& row : r) {
            if (!row.error.empty())
                out.messages.push_back(fmt::format("{} e_max={} N={} {}: {}", row.scenario,
                                                   row.e_max, row.n_subsets, row.policy, row.error));
            out.rows.push_back(std::move(row));
        }
    write_file(opt.out_dir / "results.csv", results_csv(out.rows), out);
    finish(cfg, opt, out);
    return out;
}

RunSummary run_simulate(const ScenarioConfig& cfg, const RunOptions& opt) {
    check_config(cfg);
    if (cfg.simulation_frames < 1)
        throw ConfigError("config field '/simulation_frames': simulate needs at least one frame");
    prepare_out_dir(opt);
    RunSummary out;
    const auto sc = make_scenario(cfg);
    const auto bound = upper_bound(sc.battery, sc.arrivals, sc.reward);

    const auto t0 = Clock::now();
    const auto policy = build_configured_policy(cfg, sc);
    const double g = evaluate(sc, policy, cfg.e0);
    const auto rep = simulate(sc.battery, sc.arrivals, sc.consumption, sc.reward, sc.actions,
                              policy, cfg.simulation_frames, cfg.seed, cfg.e0);

    ResultRow row;
    row.scenario = cfg.id;
    row.e_max = cfg.battery.e_max;
    row.n_subsets = subsets_of(policy, cfg.battery.e_max);
    // Names follow the Config vocabulary rather than the sweep's.
    static const std::map<PolicySource, std::string> names{
        {PolicySource::Solve, "solve"}, {PolicySource::Search, "search"},
        {PolicySource::Lcp, "lcp"},     {PolicySource::Bp, "bp"},
        {PolicySource::Fixed, "fixed"}, {PolicySource::CrossApply, "cross_apply"}};
    row.policy = names.at(cfg.policy.source);
    row.g_analytic = g;
    row.g_simulated = rep.empirical_reward;
    row.std_error = rep.std_error;
    row.g_ub = bound.g_ub;
    row.g_ideal = bound.g_ideal;
    row.wall_time_s = seconds_since(t0);
    out.rows.push_back(row);

    const double diff = std::abs(rep.empirical_reward - g);
    std::string sim = "scenario,policy,frames,seed,g_analytic,g_simulated,std_error,abs_diff,within_3se\n";
    sim += fmt::format("{},{},{},{},{},{},{},{},{}\n", csv_field(cfg.id), row.policy, rep.frames,
                       rep.seed, format_number(g), format_number(rep.empirical_reward),
                       format_number(rep.std_error), format_number(diff),
                       diff <= 3.0 * rep.std_error ? 1 : 0);
    write_file(opt.out_dir / "simulation.csv", sim, out);

    std::string visits = "state,visits\n";
    for (std::size_t e = 0; e < rep.visit_counts.size(); ++e)
        visits += fmt::format("{},{}\n", e, rep.visit_counts[e]);
    write_file(opt.out_dir / "visits.csv", visits, out);
    write_file(opt.out_dir / "policy_simulated.csv", policy_csv(policy, sc.consumption), out);
    write_file(opt.out_dir / "results.csv", results_csv(out.rows), out);
    finish(cfg, opt, out);
    return out;
}

RunSummary run_bound(const ScenarioConfig& cfg, const RunOptions& opt) {
    check_config(cfg);
    prepare_out_dir(opt);
    RunSummary out;
    const auto sc = make_scenario(cfg);
    const auto rep = upper_bound(sc.battery, sc.arrivals, sc.reward);

    std::string table = "b,pmf,a_star,beta_star,beta_star_quantized\n";
    for (std::size_t b = 0; b < rep.beta_star_table.size(); ++b)
        table += fmt::format("{},{},{},{},{}\n", b, format_number(sc.arrivals.pmf(static_cast<int>(b))),
                             format_number(rep.a_star_table[b]), format_number(rep.beta_star_table[b]),
                             format_number(rep.beta_star_quantized_table[b]));
    write_file(opt.out_dir / "bound.csv", table, out);

    std::string summary =
        "scenario,e_max,b_bar,b_bar_s,g_ub,g_ideal,b_bar_s_quantized,g_ub_quantized\n";
    summary += fmt::format("{},{},{},{},{},{},{},{}\n", csv_field(cfg.id), cfg.battery.e_max,
                           format_number(sc.arrivals.mean()), format_number(rep.b_bar_s),
                           format_number(rep.g_ub), format_number(rep.g_ideal),
                           format_number(rep.b_bar_s_quantized), format_number(rep.g_ub_quantized));
    write_file(opt.out_dir / "bound_summary.csv", summary, out);
    out.messages.push_back(fmt::format("b_bar_s={} G_ub={} g(b_bar)={}", format_number(rep.b_bar_s),
                                       format_number(rep.g_ub), format_number(rep.g_ideal)));
    finish(cfg, opt, out);
    return out;
}

RunSummary run_validate(const ScenarioConfig& cfg, const RunOptions& opt) {
    RunSummary out;
    std::string report;
    try {
        check_config(cfg);
        report += "config: ok\n";
        const auto sc = make_scenario(cfg);
        const auto check = validate_recharge_hypothesis(sc.battery, sc.arrivals);
        if (check.holds) {
            report += "recharge_hypothesis: holds\n";
        } else {
            out.ok = false;
            std::string states;
            for (int s : check.violating_states)
                states += fmt::format("{}{}", states.empty() ? "" : " ", s);
            report += fmt::format("recharge_hypothesis: fails for states {}\n", states);
        }
    } catch (const ConfigError& e) {
        out.ok = false;
        report += fmt::format("config: error: {}\n", e.what());
    }
    for (std::string_view line = report; !line.empty();) {
        const auto nl = line.find('\n');
        out.messages.emplace_back(line.substr(0, nl));
        line.remove_prefix(nl + 1);
    }
    prepare_out_dir(opt);
    write_file(opt.out_dir / "validate.txt", report, out);
    finish(cfg, opt, out);
    return out;
}

}  // namespace ehpolicy
