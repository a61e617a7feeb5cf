#include <doctest.h>

#include <clocale>
#include <filesystem>
#include <fstream>
#include <locale>
#include <sstream>

#include "ehpolicy/harness.hpp"

using namespace ehpolicy;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("ehpolicy_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(std::string_view text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

struct CommaDecimal : std::numpunct<char> {
    char do_decimal_point() const override { return ','; }
    char do_thousands_sep() const override { return '.'; }
    std::string do_grouping() const override { return "\3"; }
};

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("every preset round-trips and validates") {
        for (const auto& name : preset_names()) {
            CAPTURE(name);
            const auto cfg = preset(name);
            const auto text = serialize_config(cfg);
            const auto back = parse_config(text);
            CHECK(back == cfg);
            CHECK(serialize_config(back) == text);
            CHECK_NOTHROW(check_config(cfg));
        }
        CHECK_THROWS_AS(preset("fig9"), ConfigError);
    }

    TEST_CASE("non-default fields survive the round trip") {
        ScenarioConfig c;
        c.battery.efficiency = TabulatedEfficiency{{0.5, 0.9, 0.25}};
        c.battery.scheme = ChargingScheme::Rk4;
        c.arrivals = {ArrivalFamily::Explicit, 0.0, 2, {0.125, 0.375, 0.5}};
        c.consumption = {ConsumptionKind::Table, "", {{1, 3}, {4, 9}}};
        c.actions = {{0, 1, 4}, 2, 7};
        c.partition = {3, {0, 4, 9}};
        c.policy = {PolicySource::CrossApply, {1, 2}, QuadraticCapacitor{2.5}, PolicySource::Lcp};
        c.seed = 18446744073709551615ull;
        c.reward.lambda = 0.1 + 0.2;  // not exactly representable in short decimal
        c.sweep = {{10, 20}, {1, 3}, {}, {"bp"}};
        CHECK(parse_config(serialize_config(c)) == c);
    }

    TEST_CASE("empty object is the baseline") {
        auto c = parse_config("{}");
        c.id = "baseline";
        CHECK(c == preset("baseline"));
    }

    TEST_CASE("syntax errors carry line and column") {
        const auto msg = error_of("{\n  \"battery\": {\n    \"e_max\": 10,,\n  }\n}\n");
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("column") != std::string::npos);
    }

    TEST_CASE("schema errors name the field") {
        CHECK(error_of(R"({"battery": {"e_max": "ten"}})").find("/battery/e_max") != std::string::npos);
        CHECK(error_of(R"({"battery": {"e_max": 10.5}})").find("expected an integer") != std::string::npos);
        CHECK(error_of(R"({"batery": {}})").find("/batery") != std::string::npos);
        CHECK(error_of(R"({"arrivals": {"family": "uniform"}})").find("/arrivals/family") !=
              std::string::npos);
        CHECK(error_of(R"({"battery": {"efficiency": {"kind": "quadratic"}}})")
                  .find("/battery/efficiency/beta_nl") != std::string::npos);
        CHECK(error_of(R"({"sweep": {"e_max": [10, "x"]}})").find("/sweep/e_max/1") !=
              std::string::npos);
        CHECK(error_of(R"({"consumption": {"rows": [[1]]}})").find("/consumption/rows/0") !=
              std::string::npos);
        CHECK(error_of(R"({"seed": -4})").find("/seed") != std::string::npos);
        CHECK(error_of("[]").find("expected an object") != std::string::npos);
    }

    TEST_CASE("semantic checks") {
        auto c = preset("baseline");
        c.e0 = 101;
        CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("/e0"), ConfigError);
        c = preset("baseline");
        c.battery.e_max = 0;
        CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("/battery"), ConfigError);
        c = preset("baseline");
        c.arrivals.mean = 60;
        CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("/arrivals"), ConfigError);
        c = preset("baseline");
        c.sweep.policies = {"op_xx"};
        CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("/sweep/policies/0"), ConfigError);
        c = preset("baseline");
        c.policy.source = PolicySource::Fixed;
        c.policy.fixed_actions = {0, 1, 2};
        CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("/policy/fixed_actions"),
                             ConfigError);
        c.policy.fixed_actions = {0, 101};
        CHECK_THROWS_AS(check_config(c), ConfigError);
        c = preset("fig5");
        c.consumption.band = "2.4GHz";
        CHECK_THROWS_WITH_AS(check_config(c), doctest::Contains("/consumption"), ConfigError);
    }

    TEST_CASE("load_config reports the path") {
        const auto dir = scratch("load");
        fs::create_directories(dir);
        std::ofstream(dir / "bad.json") << "{\"e0\": true}";
        CHECK_THROWS_WITH_AS(load_config(dir / "bad.json"), doctest::Contains("bad.json"),
                             ConfigError);
        CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
    }
}

TEST_SUITE("device table") {
    TEST_CASE("quantized consumption per band") {
        auto rows = device_rows("315MHz", 0.005, 1e-5);
        CHECK(rows == std::vector<ConsumptionRow>{{1, 22}, {5, 38}, {7, 40}});
        rows = device_rows("868MHz", 0.005, 1e-5);
        CHECK(rows == std::vector<ConsumptionRow>{{1, 27}, {5, 50}, {7, 53}});
        CHECK_THROWS_AS(device_rows("2.4GHz", 0.005, 1e-5), ConfigError);
    }

    TEST_CASE("315 MHz never costs more than another band at equal Tx power") {
        const auto low = device_rows("315MHz", 0.005, 1e-5);
        for (const auto& band : device_bands()) {
            const auto other = device_rows(band, 0.005, 1e-5);
            REQUIRE(other.size() == low.size());
            for (std::size_t i = 0; i < low.size(); ++i) {
                CHECK(other[i].tx_quanta == low[i].tx_quanta);
                CHECK(other[i].consumption_quanta >= low[i].consumption_quanta);
            }
        }
    }
}

TEST_SUITE("outputs") {
    TEST_CASE("numbers ignore the global locale") {
        const auto saved = std::locale::global(std::locale(std::locale::classic(), new CommaDecimal));
        CHECK(format_number(1234567.25) == "1234567.25");
        CHECK(format_number(0.1) == "0.1");
        CHECK(format_number(1e-20) == "1e-20");
        ResultRow r;
        r.scenario = "a,b";
        r.policy = "op_ri";
        r.g_analytic = 0.5;
        r.error = "x \"y\"";
        CHECK(format_result_row(r) == "\"a,b\",0,0,op_ri,0.5,,,0,0,0.000000,\"x \"\"y\"\"\"\n");
        std::locale::global(saved);
    }

    TEST_CASE("sha256 of a known string") {
        CHECK(sha256_hex("abc") ==
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    TEST_CASE("solve with a single action writes an all-zero policy") {
        auto cfg = preset("baseline");
        cfg.battery.e_max = 20;
        cfg.actions.values = {0};
        cfg.simulation_frames = 1000;
        const auto dir = scratch("single");
        const auto out = run_solve(cfg, {dir, 1, "solve"});
        const auto text = slurp(dir / "policy_op_rp.csv");
        std::istringstream lines(text);
        std::string line;
        std::getline(lines, line);
        CHECK(line == "state,action,consumption");
        int n = 0;
        while (std::getline(lines, line)) {
            CHECK(line == std::to_string(n) + ",0,0");
            ++n;
        }
        CHECK(n == 21);
        CHECK(out.rows.at(0).g_analytic == 0.0);
    }

    TEST_CASE("fig2 policies: real battery transmits less at low charge") {
        auto cfg = preset("fig2");
        cfg.simulation_frames = 0;
        const auto dir = scratch("fig2");
        const auto out = run_solve(cfg, {dir, 1, "solve"});
        REQUIRE(out.rows.size() == 3);
        CHECK(out.rows[0].policy == "op_rp");
        CHECK(out.rows[1].policy == "op_ip");
        CHECK_FALSE(out.rows[0].g_simulated.has_value());
        const auto rp = slurp(dir / "policy_op_rp.csv");
        const auto ip = slurp(dir / "policy_op_ip.csv");
        auto actions = [](const std::string& csv) {
            std::vector<int> a;
            std::istringstream in(csv);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) a.push_back(std::stoi(line.substr(line.find(',') + 1)));
            return a;
        };
        const auto a_rp = actions(rp);
        const auto a_ip = actions(ip);
        REQUIRE(a_rp.size() == 101);
        int lower = 0;
        for (int e = 1; e <= 30; ++e) lower += a_rp[e] <= a_ip[e];
        CHECK(lower == 30);
        for (std::size_t e = 1; e < a_ip.size(); ++e) CHECK(a_ip[e] >= a_ip[e - 1]);
    }

    TEST_CASE("simulate is byte-reproducible for a seed") {
        auto cfg = preset("baseline");
        cfg.simulation_frames = 20000;
        cfg.policy.source = PolicySource::Fixed;
        cfg.policy.fixed_actions = {4, 26};
        const auto a = scratch("sim_a");
        const auto b = scratch("sim_b");
        run_simulate(cfg, {a, 1, "simulate"});
        run_simulate(cfg, {b, 1, "simulate"});
        CHECK(slurp(a / "simulation.csv") == slurp(b / "simulation.csv"));
        CHECK(slurp(a / "visits.csv") == slurp(b / "visits.csv"));
        CHECK(slurp(a / "run_manifest.txt") == slurp(b / "run_manifest.txt"));
        cfg.seed = 2;
        const auto c = scratch("sim_c");
        run_simulate(cfg, {c, 1, "simulate"});
        CHECK(slurp(a / "simulation.csv") != slurp(c / "simulation.csv"));
    }

    TEST_CASE("zero policy simulates to exactly zero") {
        auto cfg = preset("baseline");
        cfg.simulation_frames = 5000;
        cfg.policy.source = PolicySource::Fixed;
        cfg.policy.fixed_actions = {0, 0};
        const auto out = run_simulate(cfg, {scratch("zero"), 1, "simulate"});
        CHECK(*out.rows[0].g_simulated == 0.0);
    }

    TEST_CASE("sweep: per-point failures land in the error column") {
        auto cfg = preset("baseline");
        cfg.actions.max = 20;
        cfg.simulation_frames = 0;
        cfg.sweep.e_max = {10, 30};
        cfg.sweep.subsets = {2, 3};
        cfg.sweep.policies = {"bp", "op_ri"};
        const auto dir = scratch("sweep");
        const auto one = run_sweep(cfg, {dir, 1, "sweep"});
        REQUIRE(one.rows.size() == 8);
        CHECK(one.rows[0].policy == "bp");
        CHECK(one.rows[0].error.empty());
        CHECK(one.rows[1].n_subsets == 3);
        CHECK(one.rows[1].error.find("N=3") != std::string::npos);
        CHECK(one.rows[1].g_analytic == 0.0);
        // Thread count does not change the rows (wall time aside).
        const auto many = run_sweep(cfg, {scratch("sweep4"), 4, "sweep"});
        for (std::size_t i = 0; i < one.rows.size(); ++i) {
            CHECK(one.rows[i].policy == many.rows[i].policy);
            CHECK(one.rows[i].e_max == many.rows[i].e_max);
            CHECK(one.rows[i].g_analytic == many.rows[i].g_analytic);
        }
        const auto csv = slurp(dir / "results.csv");
        CHECK(csv.rfind(result_csv_header(), 0) == 0);
    }

    TEST_CASE("search and cross-applied policies") {
        auto cfg = preset("baseline");
        cfg.simulation_frames = 0;
        cfg.policy.source = PolicySource::CrossApply;
        const auto sc = make_scenario(cfg);
        const auto p = build_configured_policy(cfg, sc);
        const auto& pp = std::get<PartitionPolicy>(p);
        CHECK(pp.action == std::vector<int>{11, 28});
        const auto chain = build_chain(sc.battery, sc.arrivals, sc.consumption, sc.reward,
                                       sc.actions, p);
        CHECK(long_run_average(chain.transition, chain.state_reward).reward == 0.0);
    }

    TEST_CASE("bound and validate outputs") {
        const auto dir = scratch("bound");
        const auto cfg = preset("baseline");
        run_bound(cfg, {dir, 1, "bound"});
        const auto table = slurp(dir / "bound.csv");
        CHECK(table.rfind("b,pmf,a_star,beta_star,beta_star_quantized\n", 0) == 0);
        const auto ok = run_validate(cfg, {scratch("validate"), 1, "validate"});
        CHECK(ok.ok);
        auto bad = cfg;
        bad.battery.efficiency = QuadraticCapacitor{1.01};
        bad.arrivals = {ArrivalFamily::Explicit, 0.0, 1, {0.5, 0.5}};
        const auto fails = run_validate(bad, {scratch("validate_bad"), 1, "validate"});
        CHECK_FALSE(fails.ok);
        const auto manifest = slurp(dir / "run_manifest.txt");
        CHECK(manifest.find("config_sha256: " + sha256_hex(serialize_config(cfg))) !=
              std::string::npos);
        CHECK(manifest.find("seed: 1") != std::string::npos);
    }
}
