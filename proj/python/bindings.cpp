#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ehpolicy/harness.hpp"

namespace py = pybind11;
using namespace ehpolicy;

namespace {

py::dict row_to_dict(const ResultRow& r) {
    py::dict d;
    d["scenario"] = r.scenario;
    d["e_max"] = r.e_max;
    d["n_subsets"] = r.n_subsets;
    d["policy"] = r.policy;
    d["g_analytic"] = r.g_analytic;
    d["g_simulated"] = r.g_simulated;
    d["std_error"] = r.std_error;
    d["g_ub"] = r.g_ub;
    d["g_ideal"] = r.g_ideal;
    d["wall_time_s"] = r.wall_time_s;
    d["error"] = r.error;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Energy-harvesting transmission policies with lossy batteries";

    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    auto config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<BudgetError>(m, "BudgetError", config_error.ptr());
    py::register_exception<UnsupportedPartitionError>(m, "UnsupportedPartitionError",
                                                      config_error.ptr());
    auto numeric_error = py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", numeric_error.ptr());

    // -- efficiency ---------------------------------------------------------
    py::class_<ConstantEfficiency>(m, "ConstantEfficiency")
        .def(py::init<double>(), py::arg("eta") = 1.0)
        .def_readwrite("eta", &ConstantEfficiency::eta)
        .def("__repr__", [](const ConstantEfficiency& e) {
            return "ConstantEfficiency(eta=" + format_number(e.eta) + ")";
        });
    py::class_<QuadraticCapacitor>(m, "QuadraticCapacitor")
        .def(py::init<double>(), py::arg("beta_nl") = 1.05)
        .def_readwrite("beta_nl", &QuadraticCapacitor::beta_nl)
        .def("__repr__", [](const QuadraticCapacitor& e) {
            return "QuadraticCapacitor(beta_nl=" + format_number(e.beta_nl) + ")";
        });
    py::class_<TabulatedEfficiency>(m, "TabulatedEfficiency")
        .def(py::init<std::vector<double>>(), py::arg("values"))
        .def_readwrite("values", &TabulatedEfficiency::values);
    m.def("efficiency_at", &efficiency_at, py::arg("profile"), py::arg("e"), py::arg("e_max"));

    py::enum_<ChargingScheme>(m, "ChargingScheme")
        .value("QuantizedEuler", ChargingScheme::QuantizedEuler)
        .value("Rk4", ChargingScheme::Rk4);

    py::class_<BatteryModel>(m, "BatteryModel")
        .def(py::init<int, EfficiencyProfile, ChargingScheme, double, double, int>(),
             py::arg("e_max"), py::arg("efficiency"),
             py::arg("scheme") = ChargingScheme::QuantizedEuler, py::arg("frame_length") = 1.0,
             py::arg("slot_length") = 0.005, py::arg("integration_steps") = 256)
        .def_property_readonly("e_max", &BatteryModel::e_max)
        .def_property_readonly("efficiency", &BatteryModel::efficiency)
        .def_property_readonly("scheme", &BatteryModel::scheme)
        .def("with_efficiency", &BatteryModel::with_efficiency)
        .def("with_capacity", &BatteryModel::with_capacity);

    m.def("integrate_frame", &integrate_frame, py::arg("battery"), py::arg("e_start"), py::arg("b"));
    m.def("integrate_frame_unsaturated", &integrate_frame_unsaturated, py::arg("battery"),
          py::arg("e_start"), py::arg("b"));
    m.def("battery_step", &battery_step, py::arg("battery"), py::arg("e"), py::arg("d"),
          py::arg("b"));

    // -- arrivals -----------------------------------------------------------
    py::class_<ArrivalModel>(m, "ArrivalModel")
        .def(py::init<std::vector<double>>(), py::arg("pmf"))
        .def_static("from_weights", &ArrivalModel::from_weights)
        .def_static("degenerate", &ArrivalModel::degenerate)
        .def_property_readonly("pmf", [](const ArrivalModel& a) {
            return std::vector<double>(a.pmf().begin(), a.pmf().end());
        })
        .def_property_readonly("mean", &ArrivalModel::mean)
        .def_property_readonly("b_max", &ArrivalModel::b_max);
    m.def("make_truncated_geometric", &make_truncated_geometric, py::arg("mean"), py::arg("b_max"));
    m.def("make_truncated_poisson", &make_truncated_poisson, py::arg("mean"), py::arg("b_max"));

    py::class_<RechargeCheck>(m, "RechargeCheck")
        .def_readonly("holds", &RechargeCheck::holds)
        .def_readonly("violating_states", &RechargeCheck::violating_states);
    m.def("validate_recharge_hypothesis", &validate_recharge_hypothesis);

    // -- reward, actions, consumption ----------------------------------------
    py::class_<LogSnrReward>(m, "LogSnrReward")
        .def(py::init<double>(), py::arg("lambda_") = 0.01)
        .def_readwrite("lambda_", &LogSnrReward::lambda);
    py::class_<ShannonReward>(m, "ShannonReward")
        .def(py::init<>())
        .def_readwrite("bandwidth_hz", &ShannonReward::bandwidth_hz)
        .def_readwrite("noise_density", &ShannonReward::noise_density)
        .def_readwrite("channel_gain", &ShannonReward::channel_gain)
        .def_readwrite("slot_length", &ShannonReward::slot_length)
        .def_readwrite("frame_length", &ShannonReward::frame_length)
        .def_readwrite("quantum_joules", &ShannonReward::quantum_joules);
    m.def("reward_value", &reward_value, py::arg("reward"), py::arg("rho"));

    py::class_<ActionSet>(m, "ActionSet")
        .def(py::init<std::vector<int>>(), py::arg("actions"))
        .def_static("range", &ActionSet::range, py::arg("max"), py::arg("step") = 1)
        .def_property_readonly("values", [](const ActionSet& a) {
            return std::vector<int>(a.values().begin(), a.values().end());
        })
        .def("__len__", &ActionSet::size)
        .def("__contains__", &ActionSet::contains);

    py::class_<ConsumptionMap>(m, "ConsumptionMap")
        .def(py::init<>())
        .def(py::init([](const std::vector<std::pair<int, int>>& rows) {
                 std::vector<ConsumptionRow> r;
                 for (const auto& [tx, d] : rows) r.push_back({tx, d});
                 return ConsumptionMap(std::move(r));
             }),
             py::arg("rows"))
        .def("consumption", &ConsumptionMap::consumption)
        .def("natural_actions", &ConsumptionMap::natural_actions)
        .def_property_readonly("is_identity", &ConsumptionMap::is_identity);
    m.def("attained_reward", &attained_reward);

    // -- policies and chains -----------------------------------------------------
    py::class_<Partition>(m, "Partition")
        .def(py::init<int, std::vector<int>>(), py::arg("e_max"), py::arg("starts"))
        .def_static("uniform", &Partition::uniform, py::arg("e_max"), py::arg("n_subsets"))
        .def_static("singletons", &Partition::singletons)
        .def_property_readonly("starts", &Partition::starts)
        .def("subset_of", &Partition::subset_of)
        .def("__len__", &Partition::size);

    py::class_<StatePolicy>(m, "StatePolicy")
        .def(py::init<std::vector<int>>(), py::arg("action"))
        .def_readwrite("action", &StatePolicy::action);
    py::class_<PartitionPolicy>(m, "PartitionPolicy")
        .def(py::init<Partition, std::vector<int>>(), py::arg("partition"), py::arg("action"))
        .def_readonly("partition", &PartitionPolicy::partition)
        .def_readwrite("action", &PartitionPolicy::action);
    m.def("actions_by_state", &actions_by_state);

    m.def(
        "build_chain",
        [](const BatteryModel& b, const ArrivalModel& a, const ConsumptionMap& c,
           const RewardModel& r, const ActionSet& acts, const Policy& p) {
            auto chain = build_chain(b, a, c, r, acts, p);
            return py::make_tuple(chain.transition, chain.state_reward);
        },
        "Returns (transition matrix, per-state reward).");
    m.def(
        "long_run_average",
        [](const Eigen::MatrixXd& P, const Eigen::VectorXd& r, int e0) {
            auto res = long_run_average(P, r, e0);
            return py::make_tuple(res.reward, res.stationary);
        },
        py::arg("transition"), py::arg("state_reward"), py::arg("e0") = 0,
        "Returns (G, stationary occupation) from the point mass at e0.");

    py::class_<SimulationReport>(m, "SimulationReport")
        .def_readonly("frames", &SimulationReport::frames)
        .def_readonly("empirical_reward", &SimulationReport::empirical_reward)
        .def_readonly("std_error", &SimulationReport::std_error)
        .def_readonly("visit_counts", &SimulationReport::visit_counts)
        .def_readonly("seed", &SimulationReport::seed);
    m.def("simulate", &simulate, py::arg("battery"), py::arg("arrivals"), py::arg("consumption"),
          py::arg("reward"), py::arg("actions"), py::arg("policy"), py::arg("frames"),
          py::arg("seed"), py::arg("e0") = 0);

    // -- optimization --------------------------------------------------------------
    py::class_<Scenario>(m, "Scenario")
        .def(py::init<BatteryModel, ArrivalModel, ConsumptionMap, RewardModel, ActionSet>(),
             py::arg("battery"), py::arg("arrivals"), py::arg("consumption"), py::arg("reward"),
             py::arg("actions"))
        .def_readonly("battery", &Scenario::battery)
        .def_readonly("arrivals", &Scenario::arrivals)
        .def_readonly("actions", &Scenario::actions);

    py::class_<PerfectSocSolution>(m, "PerfectSocSolution")
        .def_readonly("policy", &PerfectSocSolution::policy)
        .def_readonly("gain", &PerfectSocSolution::gain)
        .def_readonly("long_run_reward", &PerfectSocSolution::long_run_reward)
        .def_readonly("sweeps", &PerfectSocSolution::sweeps)
        .def_readonly("warnings", &PerfectSocSolution::warnings);
    m.def(
        "solve_perfect_soc",
        [](const Scenario& sc, int e0) { return solve_perfect_soc(sc, RviOptions{.e0 = e0}); },
        py::arg("scenario"), py::arg("e0") = 0, py::call_guard<py::gil_scoped_release>());

    py::class_<SearchResult>(m, "SearchResult")
        .def_readonly("best_policy", &SearchResult::best_policy)
        .def_readonly("best_reward", &SearchResult::best_reward)
        .def_readonly("evaluated_count", &SearchResult::evaluated_count);
    m.def(
        "search_partition_policy",
        [](const Scenario& sc, const Partition& part, int e0, double budget, int threads) {
            return search_partition_policy(
                sc, part, SearchOptions{.e0 = e0, .budget = budget, .threads = threads});
        },
        py::arg("scenario"), py::arg("partition"), py::arg("e0") = 0, py::arg("budget") = 1e7,
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());

    py::class_<BoundReport>(m, "BoundReport")
        .def_readonly("beta_star_table", &BoundReport::beta_star_table)
        .def_readonly("a_star_table", &BoundReport::a_star_table)
        .def_readonly("b_bar_s", &BoundReport::b_bar_s)
        .def_readonly("g_ub", &BoundReport::g_ub)
        .def_readonly("g_ideal", &BoundReport::g_ideal)
        .def_readonly("beta_star_quantized_table", &BoundReport::beta_star_quantized_table)
        .def_readonly("b_bar_s_quantized", &BoundReport::b_bar_s_quantized)
        .def_readonly("g_ub_quantized", &BoundReport::g_ub_quantized);
    m.def("beta_star", [](const BatteryModel& b, int arrivals) {
        const auto bs = beta_star(b, arrivals);
        return py::make_tuple(bs.a_star, bs.beta);
    });
    m.def("upper_bound", &upper_bound, py::arg("battery"), py::arg("arrivals"), py::arg("reward"));
    m.def("derive_lcp", &derive_lcp);
    m.def("derive_bp", &derive_bp);

    // -- configuration and runs -------------------------------------------------
    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def_readwrite("id", &ScenarioConfig::id)
        .def_readwrite("seed", &ScenarioConfig::seed)
        .def_readwrite("simulation_frames", &ScenarioConfig::simulation_frames)
        .def_property(
            "e_max", [](const ScenarioConfig& c) { return c.battery.e_max; },
            [](ScenarioConfig& c, int e) { c.battery.e_max = e; })
        .def("to_json", &serialize_config)
        .def("__eq__", [](const ScenarioConfig& a, const ScenarioConfig& b) { return a == b; });
    m.def("parse_config", [](const std::string& text) { return parse_config(text); });
    m.def("load_config", [](const std::filesystem::path& p) { return load_config(p); });
    m.def("preset", [](const std::string& name) { return preset(name); });
    m.def("preset_names", &preset_names);
    m.def("make_scenario", &make_scenario);

    m.def(
        "run",
        [](const std::string& command, const ScenarioConfig& cfg, const std::filesystem::path& out,
           int threads) {
            RunOptions opt{out, threads, command};
            RunSummary s;
            {
                py::gil_scoped_release release;
                if (command == "solve") s = run_solve(cfg, opt);
                else if (command == "search") s = run_search(cfg, opt);
                else if (command == "sweep") s = run_sweep(cfg, opt);
                else if (command == "simulate") s = run_simulate(cfg, opt);
                else if (command == "bound") s = run_bound(cfg, opt);
                else if (command == "validate") s = run_validate(cfg, opt);
                else throw ConfigError("unknown command \"" + command + "\"");
            }
            py::list rows;
            for (const auto& r : s.rows) rows.append(row_to_dict(r));
            py::dict d;
            d["rows"] = rows;
            d["files"] = s.files;
            d["messages"] = s.messages;
            d["ok"] = s.ok;
            return d;
        },
        py::arg("command"), py::arg("config"), py::arg("out_dir"), py::arg("threads") = 1);

    m.attr("__version__") = library_version();
}
