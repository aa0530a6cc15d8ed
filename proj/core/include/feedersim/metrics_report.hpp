#pragma once

// Comparison metrics across control modes: voltage violations, DER power
// factor spread, total DER reactive power, feederhead flow, losses and
// transformer loading, plus table/CSV renderers for side-by-side runs.

#include <string>
#include <utility>
#include <vector>

#include "feedersim/powerflow.hpp"
#include "feedersim/sim_engine.hpp"

namespace feedersim {

struct ViolationStats {
    int count = 0;
    double max_v_pu = 0.0;
    double min_v_pu = 0.0;
    std::vector<std::string> violating_buses;
};

/// Buses outside their per-bus voltage limits in one solved snapshot.
ViolationStats violation_stats(const PowerFlowSolution& solution, const Feeder& feeder);

struct DerPfStats {
    double lowest_pf = 1.0;
    std::vector<std::pair<std::string, double>> per_der;  // (id, PF magnitude)
};

/// PF magnitude per DER; units at P == 0 report unity and are excluded
/// from the minimum.
DerPfStats der_pf_stats(const std::vector<DerSetpoint>& setpoints);

/// (signed sum, sum of magnitudes) of DER reactive power in kvar.
std::pair<double, double> total_der_q(const std::vector<DerSetpoint>& setpoints);

/// One mode's scalar metrics. For a static result these describe the
/// snapshot. For a time-series result, voltage extremes, violations and the
/// lowest PF aggregate over all steps (violation_count counts bus-step
/// pairs, violating_bus_count distinct buses), while the power rows are
/// taken at the step with the largest total |Q|, the peak of the
/// regulation effort.
struct ModeMetrics {
    double max_v_pu = 0.0;
    double min_v_pu = 0.0;
    int violation_count = 0;
    int violating_bus_count = 0;
    double lowest_der_pf = 1.0;
    double total_der_q_kvar = 0.0;
    double total_der_q_abs_kvar = 0.0;
    double feederhead_p_kw = 0.0;
    double feederhead_q_kvar = 0.0;
    double total_loss_kw = 0.0;
    std::vector<double> transformer_loading_percent;
};

ModeMetrics compute_mode_metrics(const ScenarioResult& result, const Feeder& feeder);

/// Per-transformer loading percent-point change, B minus A, at each run's
/// representative step.
std::vector<double> transformer_loading_delta(const ScenarioResult& result_a,
                                              const ScenarioResult& result_b,
                                              const Feeder& feeder);

/// Side-by-side metrics with reductions relative to the first (reference)
/// mode. For time-series input the per-step total |Q| series per mode are
/// carried along for plotting.
struct ModeComparison {
    std::vector<std::string> labels;
    std::vector<ModeMetrics> metrics;
    std::vector<double> q_reduction_percent;     // vs labels[0]; [0] == 0
    std::vector<double> loss_reduction_percent;  // vs labels[0]; [0] == 0
    std::vector<std::vector<double>> transformer_loading_delta_pp;  // vs labels[0]
    std::vector<double> series_t_s;                        // empty for static input
    std::vector<std::vector<double>> total_q_abs_series_kvar;  // per mode, per step
};

ModeComparison compare_modes(const std::vector<std::pair<std::string, ScenarioResult>>& results,
                             const Feeder& feeder);

/// Aligned plain-text comparison table.
std::string render_comparison_text(const ModeComparison& comparison);

/// Comparison table as CSV: one metric row per line, one column per mode.
std::string render_comparison_csv(const ModeComparison& comparison);

/// Per-timestep total |Q| per mode in long format:
/// timestep,t_s,mode,total_der_q_abs_kvar.
std::string render_total_q_series_csv(const ModeComparison& comparison);

/// Per-transformer loading change of each mode against the first, long
/// format: transformer,mode,loading_percent,delta_pp.
std::string render_transformer_delta_csv(const ModeComparison& comparison);

/// Plot-ready Q(V, P) samples of the voltage-dependent curves in long
/// format: v_pu,p_fraction,mode,q_kvar. Volt-VAr appears once per voltage
/// (it does not depend on P); volt-PF and volt-PF ver. 2 are sampled at
/// several fractions of rated power.
std::string render_curve_surface_csv(const CurveSettings& settings, double s_rated_kva,
                                     double p_rated_kw);

}  // namespace feedersim
