#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ehpolicy/harness.hpp"

namespace ehpolicy {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

template <class E>
struct Names;

template <>
struct Names<ArrivalFamily> {
    static constexpr std::array<std::pair<ArrivalFamily, const char*>, 3> table{{
        {ArrivalFamily::Geometric, "geometric"},
        {ArrivalFamily::Poisson, "poisson"},
        {ArrivalFamily::Explicit, "explicit"},
    }};
};
template <>
struct Names<RewardFamily> {
    static constexpr std::array<std::pair<RewardFamily, const char*>, 2> table{{
        {RewardFamily::LogSnr, "log_snr"},
        {RewardFamily::Shannon, "shannon"},
    }};
};
template <>
struct Names<ConsumptionKind> {
    static constexpr std::array<std::pair<ConsumptionKind, const char*>, 3> table{{
        {ConsumptionKind::Identity, "identity"},
        {ConsumptionKind::Device, "device"},
        {ConsumptionKind::Table, "table"},
    }};
};
template <>
struct Names<PolicySource> {
    static constexpr std::array<std::pair<PolicySource, const char*>, 6> table{{
        {PolicySource::Solve, "solve"},
        {PolicySource::Search, "search"},
        {PolicySource::Lcp, "lcp"},
        {PolicySource::Bp, "bp"},
        {PolicySource::Fixed, "fixed"},
        {PolicySource::CrossApply, "cross_apply"},
    }};
};
template <>
struct Names<ChargingScheme> {
    static constexpr std::array<std::pair<ChargingScheme, const char*>, 2> table{{
        {ChargingScheme::QuantizedEuler, "quantized_euler"},
        {ChargingScheme::Rk4, "rk4"},
    }};
};

template <class E>
std::string name_of(E value) {
    for (const auto& [v, n] : Names<E>::table)
        if (v == value) return n;
    return "?";
}

// ---------------------------------------------------------------------------
// Reading with field paths
// ---------------------------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(fmt::format("config field '{}': {}", path.empty() ? "/" : path, what));
}

std::string child(const std::string& path, std::string_view key) {
    return fmt::format("{}/{}", path, key);
}

const char* type_name(const json& j) { return j.type_name(); }

void require_object(const json& j, const std::string& path,
                    std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) fail(path, fmt::format("expected an object, got {}", type_name(j)));
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            fail(child(path, key), "unknown key");
    }
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer())
        fail(path, fmt::format("expected an integer, got {}", type_name(j)));
    const auto v = j.get<long long>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        fail(path, "integer out of range");
    return static_cast<int>(v);
}

double as_double(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, fmt::format("expected a number, got {}", type_name(j)));
    return j.get<double>();
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, fmt::format("expected a string, got {}", type_name(j)));
    return j.get<std::string>();
}

template <class E>
E as_enum(const json& j, const std::string& path) {
    const auto s = as_string(j, path);
    std::string options;
    for (const auto& [v, n] : Names<E>::table) {
        if (s == n) return v;
        options += options.empty() ? n : fmt::format(", {}", n);
    }
    fail(path, fmt::format("unknown value \"{}\" (expected one of: {})", s, options));
}

template <class T, class F>
std::vector<T> as_list(const json& j, const std::string& path, F&& item) {
    if (!j.is_array()) fail(path, fmt::format("expected an array, got {}", type_name(j)));
    std::vector<T> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(item(j[i], child(path, std::to_string(i))));
    return out;
}

std::vector<int> as_int_list(const json& j, const std::string& path) {
    return as_list<int>(j, path, as_int);
}
std::vector<double> as_double_list(const json& j, const std::string& path) {
    return as_list<double>(j, path, as_double);
}
std::vector<std::string> as_string_list(const json& j, const std::string& path) {
    return as_list<std::string>(j, path, as_string);
}

EfficiencyProfile read_profile(const json& j, const std::string& path) {
    require_object(j, path, {"kind", "eta", "beta_nl", "values"});
    if (!j.contains("kind")) fail(child(path, "kind"), "missing");
    const auto kind = as_string(j["kind"], child(path, "kind"));
    auto need = [&](std::string_view key) -> const json& {
        if (!j.contains(key)) fail(child(path, key), fmt::format("required for kind \"{}\"", kind));
        return j[std::string(key)];
    };
    if (kind == "constant") {
        if (j.contains("beta_nl") || j.contains("values"))
            fail(path, "constant profile takes only 'eta'");
        return ConstantEfficiency{as_double(need("eta"), child(path, "eta"))};
    }
    if (kind == "quadratic") {
        if (j.contains("eta") || j.contains("values"))
            fail(path, "quadratic profile takes only 'beta_nl'");
        return QuadraticCapacitor{as_double(need("beta_nl"), child(path, "beta_nl"))};
    }
    if (kind == "tabulated") {
        if (j.contains("eta") || j.contains("beta_nl"))
            fail(path, "tabulated profile takes only 'values'");
        return TabulatedEfficiency{as_double_list(need("values"), child(path, "values"))};
    }
    fail(child(path, "kind"),
         fmt::format("unknown value \"{}\" (expected constant, quadratic, tabulated)", kind));
}

json write_profile(const EfficiencyProfile& p) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, ConstantEfficiency>)
                return {{"kind", "constant"}, {"eta", v.eta}};
            else if constexpr (std::is_same_v<T, QuadraticCapacitor>)
                return {{"kind", "quadratic"}, {"beta_nl", v.beta_nl}};
            else
                return {{"kind", "tabulated"}, {"values", v.values}};
        },
        p);
}

// Small helper: run `f(value, path)` when `key` is present.
template <class F>
void with(const json& obj, const std::string& path, std::string_view key, F&& f) {
    if (obj.contains(key)) f(obj[std::string(key)], child(path, key));
}

void read_battery(const json& j, const std::string& p, BatteryConfig& b) {
    require_object(j, p,
                   {"e_max", "efficiency", "scheme", "frame_length", "slot_length",
                    "integration_steps", "quantum_joules"});
    with(j, p, "e_max", [&](auto& v, auto q) { b.e_max = as_int(v, q); });
    with(j, p, "efficiency", [&](auto& v, auto q) { b.efficiency = read_profile(v, q); });
    with(j, p, "scheme", [&](auto& v, auto q) { b.scheme = as_enum<ChargingScheme>(v, q); });
    with(j, p, "frame_length", [&](auto& v, auto q) { b.frame_length = as_double(v, q); });
    with(j, p, "slot_length", [&](auto& v, auto q) { b.slot_length = as_double(v, q); });
    with(j, p, "integration_steps",
         [&](auto& v, auto q) { b.integration_steps = as_int(v, q); });
    with(j, p, "quantum_joules", [&](auto& v, auto q) { b.quantum_joules = as_double(v, q); });
}

void read_arrivals(const json& j, const std::string& p, ArrivalConfig& a) {
    require_object(j, p, {"family", "mean", "b_max", "pmf"});
    with(j, p, "family", [&](auto& v, auto q) { a.family = as_enum<ArrivalFamily>(v, q); });
    with(j, p, "mean", [&](auto& v, auto q) { a.mean = as_double(v, q); });
    with(j, p, "b_max", [&](auto& v, auto q) { a.b_max = as_int(v, q); });
    with(j, p, "pmf", [&](auto& v, auto q) { a.pmf = as_double_list(v, q); });
}

void read_reward(const json& j, const std::string& p, RewardConfig& r) {
    require_object(j, p, {"family", "lambda", "bandwidth_hz", "noise_density", "channel_gain"});
    with(j, p, "family", [&](auto& v, auto q) { r.family = as_enum<RewardFamily>(v, q); });
    with(j, p, "lambda", [&](auto& v, auto q) { r.lambda = as_double(v, q); });
    with(j, p, "bandwidth_hz", [&](auto& v, auto q) { r.bandwidth_hz = as_double(v, q); });
    with(j, p, "noise_density", [&](auto& v, auto q) { r.noise_density = as_double(v, q); });
    with(j, p, "channel_gain", [&](auto& v, auto q) { r.channel_gain = as_double(v, q); });
}

void read_consumption(const json& j, const std::string& p, ConsumptionConfig& c) {
    require_object(j, p, {"kind", "band", "rows"});
    with(j, p, "kind", [&](auto& v, auto q) { c.kind = as_enum<ConsumptionKind>(v, q); });
    with(j, p, "band", [&](auto& v, auto q) { c.band = as_string(v, q); });
    with(j, p, "rows", [&](auto& v, auto q) {
        c.rows = as_list<ConsumptionRow>(v, q, [](const json& row, const std::string& rq) {
            if (!row.is_array() || row.size() != 2)
                fail(rq, "expected [tx_quanta, consumption_quanta]");
            return ConsumptionRow{as_int(row[0], child(rq, "0")), as_int(row[1], child(rq, "1"))};
        });
    });
}

void read_actions(const json& j, const std::string& p, ActionConfig& a) {
    require_object(j, p, {"values", "step", "max"});
    with(j, p, "values", [&](auto& v, auto q) { a.values = as_int_list(v, q); });
    with(j, p, "step", [&](auto& v, auto q) { a.step = as_int(v, q); });
    with(j, p, "max", [&](auto& v, auto q) {
        if (v.is_null())
            a.max.reset();
        else
            a.max = as_int(v, q);
    });
}

void read_partition(const json& j, const std::string& p, PartitionConfig& c) {
    require_object(j, p, {"subsets", "starts"});
    with(j, p, "subsets", [&](auto& v, auto q) { c.subsets = as_int(v, q); });
    with(j, p, "starts", [&](auto& v, auto q) { c.starts = as_int_list(v, q); });
}

void read_policy(const json& j, const std::string& p, PolicyConfig& c) {
    require_object(j, p, {"source", "fixed_actions", "cross_profile", "cross_inner"});
    with(j, p, "source", [&](auto& v, auto q) { c.source = as_enum<PolicySource>(v, q); });
    with(j, p, "fixed_actions", [&](auto& v, auto q) { c.fixed_actions = as_int_list(v, q); });
    with(j, p, "cross_profile", [&](auto& v, auto q) { c.cross_profile = read_profile(v, q); });
    with(j, p, "cross_inner", [&](auto& v, auto q) { c.cross_inner = as_enum<PolicySource>(v, q); });
}

void read_sweep(const json& j, const std::string& p, SweepConfig& s) {
    require_object(j, p, {"e_max", "subsets", "bands", "policies"});
    with(j, p, "e_max", [&](auto& v, auto q) { s.e_max = as_int_list(v, q); });
    with(j, p, "subsets", [&](auto& v, auto q) { s.subsets = as_int_list(v, q); });
    with(j, p, "bands", [&](auto& v, auto q) { s.bands = as_string_list(v, q); });
    with(j, p, "policies", [&](auto& v, auto q) { s.policies = as_string_list(v, q); });
}

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    // nlohmann reports the position one past the offending character.
    return {line, std::max(1, col - 1)};
}

}  // namespace

ScenarioConfig parse_config(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte);
        throw ConfigError(fmt::format("config syntax error at line {}, column {}: {}", line, col,
                                      e.what()));
    }

    ScenarioConfig c;
    const std::string p;
    require_object(root, p,
                   {"id", "battery", "arrivals", "reward", "consumption", "actions", "partition",
                    "policy", "e0", "seed", "simulation_frames", "search_budget", "include_ideal",
                    "sweep"});
    with(root, p, "id", [&](auto& v, auto q) { c.id = as_string(v, q); });
    with(root, p, "battery", [&](auto& v, auto q) { read_battery(v, q, c.battery); });
    with(root, p, "arrivals", [&](auto& v, auto q) { read_arrivals(v, q, c.arrivals); });
    with(root, p, "reward", [&](auto& v, auto q) { read_reward(v, q, c.reward); });
    with(root, p, "consumption", [&](auto& v, auto q) { read_consumption(v, q, c.consumption); });
    with(root, p, "actions", [&](auto& v, auto q) { read_actions(v, q, c.actions); });
    with(root, p, "partition", [&](auto& v, auto q) { read_partition(v, q, c.partition); });
    with(root, p, "policy", [&](auto& v, auto q) { read_policy(v, q, c.policy); });
    with(root, p, "e0", [&](auto& v, auto q) { c.e0 = as_int(v, q); });
    with(root, p, "seed", [&](auto& v, auto q) {
        if (!v.is_number_unsigned()) fail(q, "expected a nonnegative integer");
        c.seed = v.template get<std::uint64_t>();
    });
    with(root, p, "simulation_frames", [&](auto& v, auto q) {
        if (!v.is_number_integer()) fail(q, "expected an integer");
        c.simulation_frames = v.template get<long>();
    });
    with(root, p, "search_budget", [&](auto& v, auto q) { c.search_budget = as_double(v, q); });
    with(root, p, "include_ideal", [&](auto& v, auto q) {
        if (!v.is_boolean()) fail(q, "expected true or false");
        c.include_ideal = v.template get<bool>();
    });
    with(root, p, "sweep", [&](auto& v, auto q) { read_sweep(v, q, c.sweep); });
    return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string serialize_config(const ScenarioConfig& c) {
    json rows = json::array();
    for (const auto& r : c.consumption.rows) rows.push_back({r.tx_quanta, r.consumption_quanta});

    json root;
    root["id"] = c.id;
    root["battery"] = {
        {"e_max", c.battery.e_max},
        {"efficiency", write_profile(c.battery.efficiency)},
        {"scheme", name_of(c.battery.scheme)},
        {"frame_length", c.battery.frame_length},
        {"slot_length", c.battery.slot_length},
        {"integration_steps", c.battery.integration_steps},
        {"quantum_joules", c.battery.quantum_joules},
    };
    root["arrivals"] = {
        {"family", name_of(c.arrivals.family)},
        {"mean", c.arrivals.mean},
        {"b_max", c.arrivals.b_max},
        {"pmf", c.arrivals.pmf},
    };
    root["reward"] = {
        {"family", name_of(c.reward.family)},
        {"lambda", c.reward.lambda},
        {"bandwidth_hz", c.reward.bandwidth_hz},
        {"noise_density", c.reward.noise_density},
        {"channel_gain", c.reward.channel_gain},
    };
    root["consumption"] = {
        {"kind", name_of(c.consumption.kind)},
        {"band", c.consumption.band},
        {"rows", rows},
    };
    root["actions"] = {
        {"values", c.actions.values},
        {"step", c.actions.step},
        {"max", c.actions.max ? json(*c.actions.max) : json(nullptr)},
    };
    root["partition"] = {{"subsets", c.partition.subsets}, {"starts", c.partition.starts}};
    root["policy"] = {
        {"source", name_of(c.policy.source)},
        {"fixed_actions", c.policy.fixed_actions},
        {"cross_profile", write_profile(c.policy.cross_profile)},
        {"cross_inner", name_of(c.policy.cross_inner)},
    };
    root["e0"] = c.e0;
    root["seed"] = c.seed;
    root["simulation_frames"] = c.simulation_frames;
    root["search_budget"] = c.search_budget;
    root["include_ideal"] = c.include_ideal;
    root["sweep"] = {
        {"e_max", c.sweep.e_max},
        {"subsets", c.sweep.subsets},
        {"bands", c.sweep.bands},
        {"policies", c.sweep.policies},
    };
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Device table and presets
// ---------------------------------------------------------------------------

namespace {

struct DeviceLevel {
    double tx_mw;
    std::array<double, 4> consumption_mw;  // 315, 433, 868, 915 MHz
};

constexpr std::array<const char*, 4> kBands{"315MHz", "433MHz", "868MHz", "915MHz"};
constexpr std::array<DeviceLevel, 4> kDevice{{
    {14.0, {79.2, 100.2, 106.5, 104.4}},
    {10.0, {75.6, 86.4, 99.0, 96.3}},
    {1.0, {43.8, 50.4, 53.4, 52.8}},
    {0.25, {44.1, 52.5, 53.4, 52.8}},
}};

}  // namespace

std::vector<std::string> device_bands() { return {kBands.begin(), kBands.end()}; }

std::vector<ConsumptionRow> device_rows(std::string_view band, double slot_length,
                                        double quantum_joules) {
    const auto it = std::find(kBands.begin(), kBands.end(), band);
    if (it == kBands.end())
        throw ConfigError(fmt::format("unknown device band \"{}\" (expected 315MHz, 433MHz, "
                                      "868MHz or 915MHz)",
                                      band));
    if (!(slot_length > 0.0) || !(quantum_joules > 0.0))
        throw ConfigError("slot_length and quantum_joules must be positive");
    const auto col = static_cast<std::size_t>(it - kBands.begin());
    // Snap to 9 decimals first so that e.g. 99 mW * 5 ms / 10 uJ is exactly 49.5.
    auto to_quanta = [&](double mw) {
        const double q = mw * 1e-3 * slot_length / quantum_joules;
        return round_quanta(std::round(q * 1e9) / 1e9);
    };

    std::vector<ConsumptionRow> rows;
    for (const auto& level : kDevice) {
        const ConsumptionRow r{to_quanta(level.tx_mw), to_quanta(level.consumption_mw[col])};
        if (r.tx_quanta <= 0) continue;
        auto same = std::find_if(rows.begin(), rows.end(),
                                 [&](const ConsumptionRow& x) { return x.tx_quanta == r.tx_quanta; });
        if (same == rows.end())
            rows.push_back(r);
        else
            same->consumption_quanta = std::min(same->consumption_quanta, r.consumption_quanta);
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.tx_quanta < b.tx_quanta; });
    return rows;
}

std::vector<std::string> preset_names() { return {"baseline", "fig2", "fig3", "fig4", "fig5"}; }

ScenarioConfig preset(std::string_view name) {
    ScenarioConfig c;  // defaults are the baseline scenario
    c.id = std::string(name);
    if (name == "baseline") return c;
    if (name == "fig2") {
        c.policy.source = PolicySource::Solve;
        c.include_ideal = true;
        return c;
    }
    if (name == "fig3") {
        c.sweep.subsets = {1, 2, 3};
        return c;
    }
    if (name == "fig4") {
        c.actions.max = 100;
        c.sweep.e_max = {10, 20, 30, 50, 100, 150, 200, 300, 400};
        c.sweep.subsets = {2};
        c.sweep.policies = {"op_ri", "bp", "lcp", "op_ii", "op_rp"};
        return c;
    }
    if (name == "fig5") {
        c.arrivals = ArrivalConfig{ArrivalFamily::Poisson, 30.0, 50, {}};
        c.reward.family = RewardFamily::Shannon;
        c.consumption.kind = ConsumptionKind::Device;
        c.consumption.band = "315MHz";
        c.battery.e_max = 100;
        c.sweep.e_max = {25, 50, 75, 100, 150, 200};
        c.sweep.subsets = {2};
        c.sweep.bands = device_bands();
        c.sweep.policies = {"op_ri", "op_rp", "bp"};
        return c;
    }
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError(fmt::format("unknown preset \"{}\" (available: {})", name, known));
}

}  // namespace ehpolicy
