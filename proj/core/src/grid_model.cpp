#include "feedersim/grid_model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace feedersim {

namespace {

std::unordered_map<std::string, std::size_t> bus_index_map(const Feeder& f) {
    std::unordered_map<std::string, std::size_t> map;
    map.reserve(f.buses.size());
    for (std::size_t i = 0; i < f.buses.size(); ++i) map.emplace(f.buses[i].id, i);
    return map;
}

}  // namespace

const Bus* Feeder::find_bus(std::string_view id) const {
    for (const auto& bus : buses) {
        if (bus.id == id) return &bus;
    }
    return nullptr;
}

double der_max_rated_p_kw(double s_rated_kva) {
    return s_rated_kva * std::sqrt(1.0 - k_der_sizing_q_fraction * k_der_sizing_q_fraction);
}

std::string ValidationReport::to_string() const {
    if (violations.empty()) return "ok\n";
    std::ostringstream os;
    for (const auto& v : violations) os << v.code << ": " << v.message << "\n";
    return os.str();
}

ValidationReport validate_topology(const Feeder& f) {
    ValidationReport report;
    auto add = [&report](std::string code, std::string message) {
        report.violations.push_back({std::move(code), std::move(message)});
    };

    if (!(f.base_mva > 0.0)) add("bad_base", "base_mva must be positive");
    if (!(f.source_v_pu > 0.0)) add("bad_base", "source_v_pu must be positive");

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < f.buses.size(); ++i) {
        const Bus& bus = f.buses[i];
        if (bus.id.empty()) add("bad_bus", "bus #" + std::to_string(i) + " has an empty id");
        if (!index.emplace(bus.id, i).second) add("duplicate_bus", "duplicate bus id '" + bus.id + "'");
        if (!(bus.nominal_kv > 0.0)) add("bad_bus", "bus '" + bus.id + "' nominal_kv must be positive");
        if (!(bus.v_limits.min_pu < bus.v_limits.max_pu)) {
            add("bad_bus", "bus '" + bus.id + "' voltage limits must satisfy min < max");
        }
        if (bus.phase_count < 1 || bus.phase_count > 3) {
            add("bad_bus", "bus '" + bus.id + "' phase_count must be 1..3");
        }
    }

    if (f.buses.empty()) {
        add("no_buses", "feeder has no buses");
        return report;
    }
    if (index.find(f.source_bus) == index.end()) {
        add("dangling_reference", "source_bus '" + f.source_bus + "' does not exist");
    }

    auto check_endpoint = [&](const std::string& what, const std::string& id) {
        if (index.find(id) == index.end()) {
            add("dangling_reference", what + " references missing bus '" + id + "'");
            return false;
        }
        return true;
    };

    const std::size_t n = f.buses.size();
    std::vector<std::vector<std::size_t>> children(n);
    std::vector<int> in_degree(n, 0);

    auto add_edge = [&](const std::string& what, const std::string& from, const std::string& to) {
        const bool from_ok = check_endpoint(what, from);
        const bool to_ok = check_endpoint(what, to);
        if (!from_ok || !to_ok) return;
        if (from == to) {
            add("self_loop", what + " connects bus '" + from + "' to itself");
            return;
        }
        const std::size_t u = index.at(from);
        const std::size_t v = index.at(to);
        children[u].push_back(v);
        ++in_degree[v];
    };

    for (std::size_t i = 0; i < f.lines.size(); ++i) {
        const LineSegment& ln = f.lines[i];
        const std::string what = "line #" + std::to_string(i);
        add_edge(what, ln.from_bus, ln.to_bus);
        if (ln.impedance.real() < 0.0) add("bad_line", what + " has negative resistance");
        if (ln.impedance.real() == 0.0 && ln.impedance.imag() == 0.0) {
            add("bad_line", what + " has zero impedance");
        }
        const Bus* a = f.find_bus(ln.from_bus);
        const Bus* b = f.find_bus(ln.to_bus);
        if (a && b && a->nominal_kv != b->nominal_kv) {
            add("kv_mismatch", what + " joins buses with different nominal_kv; use a transformer");
        }
    }
    for (std::size_t i = 0; i < f.transformers.size(); ++i) {
        const TransformerBank& tx = f.transformers[i];
        const std::string what = "transformer #" + std::to_string(i);
        add_edge(what, tx.from_bus, tx.to_bus);
        if (!(tx.rating_kva > 0.0)) add("bad_transformer", what + " rating_kva must be positive");
        if (tx.tap_ratio < 0.9 || tx.tap_ratio > 1.1) {
            add("bad_transformer", what + " tap_ratio outside [0.9, 1.1]");
        }
    }

    for (std::size_t i = 0; i < f.loads.size(); ++i) {
        const Load& load = f.loads[i];
        check_endpoint("load '" + load.id + "'", load.bus);
        if (!std::isfinite(load.p_kw) || !std::isfinite(load.q_kvar)) {
            add("bad_load", "load '" + load.id + "' has non-finite demand");
        }
    }
    for (std::size_t i = 0; i < f.ders.size(); ++i) {
        const DerUnit& der = f.ders[i];
        const std::string what = "DER '" + der.id + "'";
        check_endpoint(what, der.bus);
        if (!(der.p_rated_kw > 0.0) || der.s_rated_kva < der.p_rated_kw) {
            add("bad_der", what + " must satisfy s_rated_kva >= p_rated_kw > 0");
        } else if (der.p_rated_kw > der_max_rated_p_kw(der.s_rated_kva) * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << what << " undersized: p_rated_kw " << der.p_rated_kw
               << " exceeds s_rated_kva*sqrt(1-0.44^2) = " << der_max_rated_p_kw(der.s_rated_kva);
            add("der_sizing", os.str());
        }
        if (der.settings) {
            try {
                der.settings->validate();
            } catch (const std::invalid_argument& e) {
                add("bad_der", what + " settings invalid: " + e.what());
            }
        }
    }

    // Radiality: |edges| == |buses| - 1, every bus reachable from the source
    // along edge direction, single parent each, no cycles.
    const std::size_t edges = f.lines.size() + f.transformers.size();
    if (edges != n - 1) {
        std::ostringstream os;
        os << "expected " << (n - 1) << " branches for " << n << " buses, found " << edges;
        add("edge_count", os.str());
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (in_degree[i] > 1 && f.buses[i].id != f.source_bus) {
            add("multiple_parents", "bus '" + f.buses[i].id + "' is fed by more than one branch");
        }
    }

    if (index.find(f.source_bus) != index.end()) {
        // Cycle detection by iterative DFS coloring over the directed graph.
        std::vector<int> color(n, 0);  // 0 white, 1 on stack, 2 done
        bool cycle = false;
        for (std::size_t root = 0; root < n && !cycle; ++root) {
            if (color[root] != 0) continue;
            std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
            color[root] = 1;
            while (!stack.empty() && !cycle) {
                auto& [node, next] = stack.back();
                if (next < children[node].size()) {
                    const std::size_t child = children[node][next++];
                    if (color[child] == 1) {
                        cycle = true;
                    } else if (color[child] == 0) {
                        color[child] = 1;
                        stack.push_back({child, 0});
                    }
                } else {
                    color[node] = 2;
                    stack.pop_back();
                }
            }
        }
        if (cycle) add("cycle", "cycle detected in the branch graph");

        std::vector<bool> reached(n, false);
        std::vector<std::size_t> queue{index.at(f.source_bus)};
        reached[queue.front()] = true;
        while (!queue.empty()) {
            const std::size_t u = queue.back();
            queue.pop_back();
            for (std::size_t v : children[u]) {
                if (!reached[v]) {
                    reached[v] = true;
                    queue.push_back(v);
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!reached[i]) {
                add("disconnected", "bus '" + f.buses[i].id + "' is not reachable from the source");
            }
        }
    }

    return report;
}

Feeder per_unit_normalize(const Feeder& feeder) {
    if (feeder.normalized) return feeder;
    if (!(feeder.base_mva > 0.0)) throw std::invalid_argument("per_unit_normalize: base_mva must be positive");

    Feeder out = feeder;
    out.normalized = true;
    const double base_kva = feeder.base_mva * 1000.0;

    auto kv_of = [&feeder](const std::string& id) {
        const Bus* bus = feeder.find_bus(id);
        if (bus == nullptr) {
            throw std::invalid_argument("per_unit_normalize: unknown bus '" + id + "'");
        }
        if (!(bus->nominal_kv > 0.0)) {
            throw std::invalid_argument("per_unit_normalize: bus '" + id + "' nominal_kv must be positive");
        }
        return bus->nominal_kv;
    };

    for (auto& line : out.lines) {
        const double kv = kv_of(line.from_bus);
        const double z_base = kv * kv / feeder.base_mva;  // ohms
        line.impedance /= z_base;
    }
    for (auto& tx : out.transformers) {
        if (!(tx.rating_kva > 0.0)) {
            throw std::invalid_argument("per_unit_normalize: transformer rating_kva must be positive");
        }
        // Own kVA base to system base; winding voltage bases are taken equal
        // to the adjacent bus bases.
        tx.series_impedance *= base_kva / tx.rating_kva;
        tx.rating_kva /= base_kva;
    }
    for (auto& load : out.loads) {
        load.p_kw /= base_kva;
        load.q_kvar /= base_kva;
    }
    for (auto& der : out.ders) {
        der.s_rated_kva /= base_kva;
        der.p_rated_kw /= base_kva;
    }
    return out;
}

std::vector<BranchView> unified_branches(const Feeder& f) {
    std::vector<BranchView> branches;
    branches.reserve(f.lines.size() + f.transformers.size());
    for (const auto& line : f.lines) {
        branches.push_back({line.from_bus, line.to_bus, line.impedance, 1.0, false, 0.0});
    }
    for (const auto& tx : f.transformers) {
        branches.push_back({tx.from_bus, tx.to_bus, tx.series_impedance, tx.tap_ratio, true, tx.rating_kva});
    }
    return branches;
}

SweepOrder downstream_order(const Feeder& f) {
    const auto index = bus_index_map(f);
    const auto branches = unified_branches(f);
    const std::size_t n = f.buses.size();

    auto fail = [](const std::string& why) {
        throw std::invalid_argument("downstream_order: feeder is not radial: " + why);
    };

    if (n == 0) fail("no buses");
    if (branches.size() != n - 1) fail("branch count != bus count - 1");
    auto source_it = index.find(f.source_bus);
    if (source_it == index.end()) fail("source bus '" + f.source_bus + "' does not exist");

    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> children(n);  // (bus, branch)
    std::vector<int> parent_bus(n, -1);
    std::vector<int> parent_branch(n, -1);
    for (std::size_t k = 0; k < branches.size(); ++k) {
        auto from_it = index.find(branches[k].from_bus);
        auto to_it = index.find(branches[k].to_bus);
        if (from_it == index.end() || to_it == index.end()) fail("branch references a missing bus");
        const std::size_t child = to_it->second;
        if (parent_branch[child] != -1) fail("bus '" + f.buses[child].id + "' has more than one parent");
        if (child == source_it->second) fail("a branch feeds the source bus");
        parent_bus[child] = static_cast<int>(from_it->second);
        parent_branch[child] = static_cast<int>(k);
        children[from_it->second].push_back({child, k});
    }

    SweepOrder order;
    order.bus_order.reserve(n);
    order.branch_order.reserve(branches.size());
    order.parent_bus = std::move(parent_bus);
    order.parent_branch = std::move(parent_branch);

    std::vector<std::size_t> stack{source_it->second};
    std::vector<bool> seen(n, false);
    seen[source_it->second] = true;
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        order.bus_order.push_back(u);
        // Reverse push keeps children in declaration order on the stack.
        for (auto it = children[u].rbegin(); it != children[u].rend(); ++it) {
            if (seen[it->first]) fail("cycle detected");
            seen[it->first] = true;
            order.branch_order.push_back(it->second);
            stack.push_back(it->first);
        }
    }
    if (order.bus_order.size() != n) fail("not all buses reachable from the source");

    return order;
}

}  // namespace feedersim
