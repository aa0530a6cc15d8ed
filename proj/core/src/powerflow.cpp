#include "feedersim/powerflow.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace feedersim {

std::size_t PowerFlowSolution::bus_index(std::string_view id) const {
    for (std::size_t i = 0; i < bus_ids.size(); ++i) {
        if (bus_ids[i] == id) return i;
    }
    throw std::invalid_argument("PowerFlowSolution: unknown bus '" + std::string(id) + "'");
}

Complex PowerFlowSolution::voltage(std::string_view id) const {
    return v_pu[bus_index(id)];
}

PowerFlowSolution solve_radial(const Feeder& feeder, const InjectionSet& injections,
                               const SolverOptions& opts,
                               const std::vector<Complex>* warm_start) {
    if (!feeder.normalized) {
        throw std::invalid_argument("solve_radial expects a per-unit normalized feeder");
    }
    if (!(opts.tolerance > 0.0) || opts.max_iterations < 1) {
        throw std::invalid_argument("solve_radial: invalid solver options");
    }

    const SweepOrder order = downstream_order(feeder);  // throws if non-radial
    const auto branches = unified_branches(feeder);
    const std::size_t n = feeder.buses.size();

    std::unordered_map<std::string_view, std::size_t> index;
    index.reserve(n);
    for (std::size_t i = 0; i < n; ++i) index.emplace(feeder.buses[i].id, i);
    const std::size_t source = index.at(feeder.source_bus);

    std::vector<Complex> s_inj(n, Complex{0.0, 0.0});
    for (const auto& [bus, s] : injections) {
        auto it = index.find(bus);
        if (it == index.end()) {
            throw std::invalid_argument("solve_radial: injection references unknown bus '" + bus + "'");
        }
        s_inj[it->second] += s;
    }

    std::vector<Complex> v(n, Complex{feeder.source_v_pu, 0.0});
    if (warm_start != nullptr) {
        if (warm_start->size() != n) {
            throw std::invalid_argument("solve_radial: warm start size does not match bus count");
        }
        v = *warm_start;
    }
    v[source] = Complex{feeder.source_v_pu, 0.0};

    std::vector<Complex> branch_i(branches.size(), Complex{});
    std::vector<Complex> downstream(n, Complex{});

    bool converged = false;
    int iterations = 0;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        iterations = iter + 1;

        // Backward: accumulate demand currents from the leaves. downstream[u]
        // collects the upstream-side currents of all branches leaving u.
        for (std::size_t i = 0; i < n; ++i) downstream[i] = Complex{};
        for (auto it = order.branch_order.rbegin(); it != order.branch_order.rend(); ++it) {
            const std::size_t k = *it;
            const BranchView& b = branches[k];
            const std::size_t child = index.at(b.to_bus);
            const Complex demand = -std::conj(s_inj[child] / v[child]);
            branch_i[k] = demand + downstream[child];
            downstream[index.at(b.from_bus)] += branch_i[k] / b.tap_ratio;
        }

        // Forward: re-derive voltages from the fixed source.
        double max_dv = 0.0;
        for (const std::size_t k : order.branch_order) {
            const BranchView& b = branches[k];
            const Complex v_new = v[index.at(b.from_bus)] / b.tap_ratio - b.impedance * branch_i[k];
            const std::size_t child = index.at(b.to_bus);
            const double dv = std::abs(v_new - v[child]);
            if (!std::isfinite(dv)) {
                max_dv = std::numeric_limits<double>::infinity();
            } else if (dv > max_dv) {
                max_dv = dv;
            }
            v[child] = v_new;
        }

        if (max_dv < opts.tolerance) {
            converged = true;
            break;
        }
    }

    PowerFlowSolution sol;
    sol.base_mva = feeder.base_mva;
    sol.converged = converged;
    sol.iterations = iterations;
    sol.bus_ids.reserve(n);
    for (const auto& bus : feeder.buses) sol.bus_ids.push_back(bus.id);
    sol.v_pu = v;

    const double base_kw = feeder.base_mva * 1000.0;
    sol.branches.reserve(branches.size());
    double loss_pu = 0.0;
    for (std::size_t k = 0; k < branches.size(); ++k) {
        const BranchView& b = branches[k];
        BranchFlow flow;
        flow.from_bus = b.from_bus;
        flow.to_bus = b.to_bus;
        flow.is_transformer = b.is_transformer;
        flow.current_pu = branch_i[k];
        flow.s_send_pu = v[index.at(b.from_bus)] * std::conj(branch_i[k] / b.tap_ratio);
        const double branch_loss = std::norm(branch_i[k]) * b.impedance.real();
        flow.loss_kw = branch_loss * base_kw;
        loss_pu += branch_loss;
        sol.branches.push_back(std::move(flow));
    }
    sol.total_loss_kw = loss_pu * base_kw;

    Complex s_head = -s_inj[source];
    s_head += v[source] * std::conj(downstream[source]);
    sol.feederhead_p_kw = s_head.real() * base_kw;
    sol.feederhead_q_kvar = s_head.imag() * base_kw;
    return sol;
}

double feeder_losses_kw(const PowerFlowSolution& solution) {
    double total = 0.0;
    for (const auto& branch : solution.branches) total += branch.loss_kw;
    return total;
}

std::pair<double, double> feederhead_flow_kw_kvar(const PowerFlowSolution& solution) {
    return {solution.feederhead_p_kw, solution.feederhead_q_kvar};
}

std::vector<double> transformer_loading_percent(const PowerFlowSolution& solution,
                                                const Feeder& feeder) {
    std::vector<double> loading;
    loading.reserve(feeder.transformers.size());
    const double base_kva = solution.base_mva * 1000.0;
    std::size_t k = 0;
    for (const auto& branch : solution.branches) {
        if (!branch.is_transformer) continue;
        if (k >= feeder.transformers.size()) {
            throw std::invalid_argument("transformer_loading_percent: feeder does not match solution");
        }
        const double rating_kva = feeder.normalized
                                      ? feeder.transformers[k].rating_kva * base_kva
                                      : feeder.transformers[k].rating_kva;
        loading.push_back(std::abs(branch.s_send_pu) * base_kva / rating_kva * 100.0);
        ++k;
    }
    if (k != feeder.transformers.size()) {
        throw std::invalid_argument("transformer_loading_percent: feeder does not match solution");
    }
    return loading;
}

}  // namespace feedersim
