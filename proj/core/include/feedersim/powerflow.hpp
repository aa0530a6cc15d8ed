#pragma once

// Backward/forward sweep power flow for radial per-unit networks. The
// backward pass accumulates branch currents from constant-power injections
// at the present voltage estimate, the forward pass re-propagates voltages
// from the fixed source; iteration stops when no voltage moves more than
// the tolerance.

#include <map>
#include <string_view>
#include <utility>
#include <vector>

#include "feedersim/grid_model.hpp"

namespace feedersim {

/// Net complex power injection per bus, per unit on the system base.
/// Generation is positive; loads enter with a negative sign.
using InjectionSet = std::map<std::string, Complex>;

struct SolverOptions {
    double tolerance = 1e-8;  // max |dV| per iteration, p.u.
    int max_iterations = 100;
    bool flat_start = true;
};

struct BranchFlow {
    std::string from_bus;
    std::string to_bus;
    bool is_transformer = false;
    Complex current_pu{};  // on the downstream side of the branch
    Complex s_send_pu{};   // complex power entering the upstream side
    double loss_kw = 0.0;
};

struct PowerFlowSolution {
    std::vector<std::string> bus_ids;
    std::vector<Complex> v_pu;  // aligned with bus_ids
    std::vector<BranchFlow> branches;
    double base_mva = 1.0;
    double total_loss_kw = 0.0;
    double feederhead_p_kw = 0.0;    // positive = import from the substation
    double feederhead_q_kvar = 0.0;
    bool converged = false;
    int iterations = 0;

    [[nodiscard]] std::size_t bus_index(std::string_view id) const;  // throws if unknown
    [[nodiscard]] Complex voltage(std::string_view id) const;
};

/// Solves the feeder (which must already be per-unit normalized) for the
/// given injections. The source voltage is held at feeder.source_v_pu.
/// Divergence is reported through converged = false with the last iterate;
/// a non-radial feeder or an injection at an unknown bus throws.
/// `warm_start`, when provided with one voltage per bus in feeder bus
/// order, seeds the iteration instead of a flat profile.
PowerFlowSolution solve_radial(const Feeder& feeder, const InjectionSet& injections,
                               const SolverOptions& opts = {},
                               const std::vector<Complex>* warm_start = nullptr);

/// Total series active loss over all branches, in kW.
double feeder_losses_kw(const PowerFlowSolution& solution);

/// Complex power entering the source bus, as (P_kw, Q_kvar). Positive =
/// import from the substation, negative = reverse flow.
std::pair<double, double> feederhead_flow_kw_kvar(const PowerFlowSolution& solution);

/// |S| through each transformer bank as a percentage of its rating, in the
/// order the banks appear in feeder.transformers.
std::vector<double> transformer_loading_percent(const PowerFlowSolution& solution,
                                                const Feeder& feeder);

}  // namespace feedersim
