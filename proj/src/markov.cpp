#include "ehpolicy/markov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace ehpolicy {

// ---------------------------------------------------------------------------
// Partition / policy
// ---------------------------------------------------------------------------

Partition::Partition(int e_max, std::vector<int> starts)
    : e_max_(e_max), starts_(std::move(starts)) {
    if (e_max_ < 1) throw ConfigError("partition e_max must be >= 1");
    if (starts_.empty() || starts_.front() != 0)
        throw ConfigError("partition must start at state 0");
    for (std::size_t i = 1; i < starts_.size(); ++i) {
        if (starts_[i] <= starts_[i - 1])
            throw ConfigError("partition subset starts must be strictly increasing");
    }
    if (starts_.back() > e_max_)
        throw ConfigError(fmt::format("partition subset starts beyond e_max={}", e_max_));
}

Partition Partition::uniform(int e_max, int n_subsets) {
    if (n_subsets < 1 || n_subsets > e_max + 1)
        throw ConfigError(fmt::format("cannot split {} states into {} subsets", e_max + 1,
                                      n_subsets));
    std::vector<int> starts(static_cast<std::size_t>(n_subsets));
    for (int i = 0; i < n_subsets; ++i)
        starts[i] = static_cast<int>(
            (static_cast<long>(i) * (e_max + 1) + n_subsets - 1) / n_subsets);
    return Partition(e_max, std::move(starts));
}

Partition Partition::singletons(int e_max) {
    std::vector<int> starts(static_cast<std::size_t>(e_max) + 1);
    std::iota(starts.begin(), starts.end(), 0);
    return Partition(e_max, std::move(starts));
}

int Partition::last(int subset) const {
    if (subset < 0 || subset >= size()) throw DomainError("subset index out of range");
    return subset + 1 < size() ? starts_[subset + 1] - 1 : e_max_;
}

int Partition::subset_of(int e) const {
    if (e < 0 || e > e_max_) throw DomainError(fmt::format("state {} outside partition", e));
    return static_cast<int>(std::upper_bound(starts_.begin(), starts_.end(), e) -
                            starts_.begin()) -
           1;
}

std::vector<int> actions_by_state(const Policy& policy, int e_max) {
    if (const auto* sp = std::get_if<StatePolicy>(&policy)) {
        if (static_cast<int>(sp->action.size()) != e_max + 1)
            throw ConfigError(fmt::format("state policy has {} entries, expected {}",
                                          sp->action.size(), e_max + 1));
        return sp->action;
    }
    const auto& pp = std::get<PartitionPolicy>(policy);
    if (pp.partition.e_max() != e_max)
        throw ConfigError(fmt::format("partition covers e_max={}, battery has e_max={}",
                                      pp.partition.e_max(), e_max));
    if (static_cast<int>(pp.action.size()) != pp.partition.size())
        throw ConfigError(fmt::format("partition policy has {} actions for {} subsets",
                                      pp.action.size(), pp.partition.size()));
    std::vector<int> out(static_cast<std::size_t>(e_max) + 1);
    for (int t = 0; t < pp.partition.size(); ++t)
        for (int e = pp.partition.first(t); e <= pp.partition.last(t); ++e)
            out[e] = pp.action[t];
    return out;
}

// ---------------------------------------------------------------------------
// Chain construction
// ---------------------------------------------------------------------------

ChargeKernel::ChargeKernel(const BatteryModel& battery, const ArrivalModel& arrivals)
    : e_max_(battery.e_max()), b_max_(arrivals.b_max()) {
    const auto n = static_cast<std::size_t>(e_max_) + 1;
    next_.resize(n * (b_max_ + 1));
    rows_.resize(n);
    std::vector<double> mass(n);
    for (int a = 0; a <= e_max_; ++a) {
        std::fill(mass.begin(), mass.end(), 0.0);
        for (int b = 0; b <= b_max_; ++b) {
            const int next = battery_step(battery, a, 0, b);
            next_[static_cast<std::size_t>(a) * (b_max_ + 1) + b] = next;
            mass[next] += arrivals.pmf(b);
        }
        for (int j = 0; j <= e_max_; ++j)
            if (mass[j] > 0.0) rows_[a].emplace_back(j, mass[j]);
    }
}

Chain build_chain(const ChargeKernel& kernel, const ConsumptionMap& cons,
                  const RewardModel& reward, const ActionSet& actions,
                  const std::vector<int>& state_actions) {
    const int n = kernel.e_max() + 1;
    if (static_cast<int>(state_actions.size()) != n)
        throw ConfigError(fmt::format("policy covers {} states, chain has {}",
                                      state_actions.size(), n));
    Chain chain{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
    for (int e = 0; e < n; ++e) {
        const int rho = state_actions[e];
        chain.state_reward[e] = attained_reward(reward, cons, actions, rho, e);
        const int level = std::max(0, e - cons.consumption(rho));
        for (const auto& [j, p] : kernel.row(level)) chain.transition(e, j) += p;
    }
    return chain;
}

Chain build_chain(const BatteryModel& battery, const ArrivalModel& arrivals,
                  const ConsumptionMap& cons, const RewardModel& reward,
                  const ActionSet& actions, const Policy& policy) {
    const auto state_actions = actions_by_state(policy, battery.e_max());
    return build_chain(ChargeKernel(battery, arrivals), cons, reward, actions, state_actions);
}

// ---------------------------------------------------------------------------
// Long-run average
// ---------------------------------------------------------------------------

namespace {

void check_stochastic(const Eigen::MatrixXd& P, const Eigen::VectorXd& r, int e0) {
    if (P.rows() != P.cols() || P.rows() == 0)
        throw NumericError("transition matrix must be square and nonempty");
    if (r.size() != P.rows())
        throw NumericError("state reward length does not match transition matrix");
    if (e0 < 0 || e0 >= P.rows())
        throw DomainError(fmt::format("initial state {} outside chain", e0));
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index j = 0; j < P.cols(); ++j) {
            const double p = P(i, j);
            if (!(p >= 0.0))
                throw NumericError(fmt::format("negative transition entry at ({}, {})", i, j));
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-10)
            throw NumericError(fmt::format("transition row {} sums to {}", i, sum));
    }
}

// Tarjan's SCC restricted to `nodes`; returns component id per node (-1 outside).
std::vector<int> strongly_connected(const std::vector<std::vector<int>>& adj,
                                    const std::vector<int>& nodes, int n, int& n_comps) {
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<char> on_stack(n, 0);
    std::vector<int> stack;
    std::vector<std::pair<int, std::size_t>> call;
    int counter = 0;
    n_comps = 0;

    for (int root : nodes) {
        if (index[root] >= 0) continue;
        call.emplace_back(root, 0);
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& [v, next] = call.back();
            if (next < adj[v].size()) {
                const int w = adj[v][next++];
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            const int done = v;
            call.pop_back();
            if (!call.empty()) {
                const int parent = call.back().first;
                low[parent] = std::min(low[parent], low[done]);
            }
            if (low[done] == index[done]) {
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = n_comps;
                } while (w != done);
                ++n_comps;
            }
        }
    }
    return comp;
}

}  // namespace

LongRunResult long_run_average(const Eigen::MatrixXd& P, const Eigen::VectorXd& r, int e0) {
    check_stochastic(P, r, e0);
    const int n = static_cast<int>(P.rows());

    // Reachability from e0.
    std::vector<std::vector<int>> adj(n);
    std::vector<char> seen(n, 0);
    std::vector<int> reach{e0};
    seen[e0] = 1;
    for (std::size_t k = 0; k < reach.size(); ++k) {
        const int u = reach[k];
        for (int v = 0; v < n; ++v) {
            if (P(u, v) > 0.0) {
                adj[u].push_back(v);
                if (!seen[v]) {
                    seen[v] = 1;
                    reach.push_back(v);
                }
            }
        }
    }

    int n_comps = 0;
    const auto comp = strongly_connected(adj, reach, n, n_comps);
    std::vector<char> closed(n_comps, 1);
    for (int u : reach)
        for (int v : adj[u])
            if (comp[v] != comp[u]) closed[comp[u]] = 0;

    std::vector<std::vector<int>> members(n_comps);
    for (int u : reach) members[comp[u]].push_back(u);
    for (auto& m : members) std::sort(m.begin(), m.end());

    // Stationary law of each closed (irreducible) class.
    auto class_stationary = [&](const std::vector<int>& cls) {
        const auto m = static_cast<Eigen::Index>(cls.size());
        Eigen::MatrixXd A(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                A(j, i) = P(cls[i], cls[j]) - (i == j ? 1.0 : 0.0);
        A.row(m - 1).setOnes();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
        rhs[m - 1] = 1.0;
        Eigen::VectorXd pi = A.partialPivLu().solve(rhs);
        pi = pi.cwiseMax(0.0);
        return Eigen::VectorXd(pi / pi.sum());
    };

    LongRunResult out;
    out.stationary = Eigen::VectorXd::Zero(n);

    if (closed[comp[e0]]) {
        const auto& cls = members[comp[e0]];
        const auto pi = class_stationary(cls);
        for (std::size_t i = 0; i < cls.size(); ++i) out.stationary[cls[i]] = pi[i];
    } else {
        // Expected visits to transient states from e0, then absorption mass.
        std::vector<int> transient;
        std::vector<int> pos(n, -1);
        for (int u : reach)
            if (!closed[comp[u]]) {
                pos[u] = static_cast<int>(transient.size());
                transient.push_back(u);
            }
        const auto t = static_cast<Eigen::Index>(transient.size());
        Eigen::MatrixXd A(t, t);
        for (Eigen::Index i = 0; i < t; ++i)
            for (Eigen::Index j = 0; j < t; ++j)
                A(j, i) = (i == j ? 1.0 : 0.0) - P(transient[i], transient[j]);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(t);
        rhs[pos[e0]] = 1.0;
        const Eigen::VectorXd visits = A.partialPivLu().solve(rhs);

        std::vector<double> absorb(n_comps, 0.0);
        for (Eigen::Index i = 0; i < t; ++i) {
            const int u = transient[i];
            for (int v : adj[u])
                if (closed[comp[v]]) absorb[comp[v]] += visits[i] * P(u, v);
        }
        for (int c = 0; c < n_comps; ++c) {
            if (!closed[c] || absorb[c] <= 0.0) continue;
            const auto pi = class_stationary(members[c]);
            for (std::size_t i = 0; i < members[c].size(); ++i)
                out.stationary[members[c][i]] += absorb[c] * pi[i];
        }
        out.stationary /= out.stationary.sum();
    }
    out.reward = out.stationary.dot(r);
    return out;
}

LongRunResult lazy_power_average(const Eigen::MatrixXd& P, const Eigen::VectorXd& r, int e0,
                                 double tol, long max_iterations) {
    check_stochastic(P, r, e0);
    const Eigen::MatrixXd Pt = P.transpose();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(P.rows());
    x[e0] = 1.0;
    double residual = 0.0;
    for (long it = 0; it < max_iterations; ++it) {
        Eigen::VectorXd y = 0.5 * (x + Pt * x);
        residual = (y - x).lpNorm<1>();
        x = std::move(y);
        if (residual < tol) {
            x /= x.sum();
            return {x.dot(r), x};
        }
    }
    throw ConvergenceError(
        fmt::format("power iteration did not converge in {} iterations (residual {:.3e})",
                    max_iterations, residual),
        residual);
}

ChainAnalysis analyze_policy(const BatteryModel& battery, const ArrivalModel& arrivals,
                             const ConsumptionMap& cons, const RewardModel& reward,
                             const ActionSet& actions, const Policy& policy, int e0) {
    auto chain = build_chain(battery, arrivals, cons, reward, actions, policy);
    auto lr = long_run_average(chain.transition, chain.state_reward, e0);
    return {std::move(chain.transition), std::move(chain.state_reward),
            std::move(lr.stationary), lr.reward};
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

SimulationReport simulate(const BatteryModel& battery, const ArrivalModel& arrivals,
                          const ConsumptionMap& cons, const RewardModel& reward,
                          const ActionSet& actions, const Policy& policy, long frames,
                          std::uint64_t seed, int e0) {
    if (frames < 1) throw DomainError("simulation needs at least one frame");
    const int e_max = battery.e_max();
    if (e0 < 0 || e0 > e_max) throw DomainError("initial state outside battery range");

    const auto state_actions = actions_by_state(policy, e_max);
    const ChargeKernel kernel(battery, arrivals);
    std::vector<double> gain(e_max + 1);
    std::vector<int> drain(e_max + 1);
    for (int e = 0; e <= e_max; ++e) {
        gain[e] = attained_reward(reward, cons, actions, state_actions[e], e);
        drain[e] = cons.consumption(state_actions[e]);
    }

    SimulationReport rep;
    rep.frames = frames;
    rep.seed = seed;
    rep.visit_counts.assign(static_cast<std::size_t>(e_max) + 1, 0);

    const long n_batches = std::max(1L, static_cast<long>(std::sqrt(static_cast<double>(frames))));
    const long batch_len = frames / n_batches;
    std::vector<double> batch_sum(static_cast<std::size_t>(n_batches), 0.0);

    std::mt19937_64 rng(seed);
    double total = 0.0;
    int e = e0;
    for (long k = 0; k < frames; ++k) {
        ++rep.visit_counts[e];
        total += gain[e];
        const long batch = k / batch_len;
        if (batch < n_batches) batch_sum[batch] += gain[e];
        const int level = std::max(0, e - drain[e]);
        e = kernel.next_level(level, sample_arrival(arrivals, rng));
    }
    rep.empirical_reward = total / static_cast<double>(frames);

    if (n_batches > 1) {
        double mean = 0.0;
        for (double s : batch_sum) mean += s / batch_len;
        mean /= n_batches;
        double var = 0.0;
        for (double s : batch_sum) {
            const double d = s / batch_len - mean;
            var += d * d;
        }
        var /= static_cast<double>(n_batches - 1);
        rep.std_error = std::sqrt(var / n_batches);
    }
    return rep;
}

}  // namespace ehpolicy
