// ehpolicy: transmission policies for an energy-harvesting device with a
// lossy battery.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ehpolicy/harness.hpp"

namespace {

struct Common {
    std::string config_path;
    std::string preset;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

void add_common(CLI::App* cmd, Common& c) {
    auto* cfg = cmd->add_option("--config", c.config_path, "Scenario file (JSON)")
                    ->check(CLI::ExistingFile);
    auto* pre = cmd->add_option("--preset", c.preset, "Built-in scenario")
                    ->check(CLI::IsMember(ehpolicy::preset_names()));
    cfg->excludes(pre);
    cmd->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--seed", c.seed, "Override the configured simulation seed");
    cmd->add_option("--threads", c.threads, "Worker threads")
        ->check(CLI::Range(1, 1024))
        ->capture_default_str();
}

ehpolicy::ScenarioConfig resolve(const Common& c) {
    ehpolicy::ScenarioConfig cfg;
    if (!c.config_path.empty())
        cfg = ehpolicy::load_config(c.config_path);
    else if (!c.preset.empty())
        cfg = ehpolicy::preset(c.preset);
    else
        cfg = ehpolicy::preset("baseline");
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transmission policies for an energy-harvesting device with a lossy battery"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ehpolicy::library_version());

    Common common;
    using Runner = ehpolicy::RunSummary (*)(const ehpolicy::ScenarioConfig&,
                                            const ehpolicy::RunOptions&);
    struct Sub {
        const char* name;
        const char* help;
        Runner run;
    };
    const Sub subs[] = {
        {"solve", "Optimal policy with perfect state-of-charge knowledge", ehpolicy::run_solve},
        {"search", "Exhaustive search over partition policies", ehpolicy::run_search},
        {"sweep", "Evaluate policies over battery sizes, partitions and bands", ehpolicy::run_sweep},
        {"simulate", "Monte Carlo check of the configured policy", ehpolicy::run_simulate},
        {"bound", "Storage-aware throughput upper bound", ehpolicy::run_bound},
        {"validate", "Check the config and the recharge hypothesis", ehpolicy::run_validate},
    };
    Runner chosen = nullptr;
    std::string chosen_name;
    for (const auto& s : subs) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, common);
        cmd->callback([&, s] {
            chosen = s.run;
            chosen_name = s.name;
        });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = resolve(common);
        ehpolicy::RunOptions opt{common.out_dir, common.threads, chosen_name};
        const auto summary = chosen(cfg, opt);
        for (const auto& m : summary.messages) std::cout << m << '\n';
        for (const auto& r : summary.rows) {
            std::cout << fmt::format("{:<16} e_max={:<4} N={:<4} {:<14} G={:.6f}", r.scenario,
                                     r.e_max, r.n_subsets, r.policy, r.g_analytic);
            if (r.g_simulated) std::cout << fmt::format("  sim={:.6f}±{:.6f}", *r.g_simulated, *r.std_error);
            if (!r.error.empty()) std::cout << "  error: " << r.error;
            std::cout << '\n';
        }
        std::cout << "wrote " << summary.files.size() << " file(s) to " << opt.out_dir.string()
                  << '\n';
        return summary.ok ? 0 : 1;
    } catch (const ehpolicy::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
