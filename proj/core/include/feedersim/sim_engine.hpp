#pragma once

// Couples the grid-support curves with the network solver: static snapshots
// converge an outer control iteration over DER setpoints; time-series runs
// step a quasi-static simulation with first-order inverter response and
// delay-buffered supervisory agents issuing PF or Q commands.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "feedersim/grid_model.hpp"
#include "feedersim/powerflow.hpp"

namespace feedersim {

struct ControlOptions {
    double lambda = 0.5;             // control-iteration damping, (0, 1]
    double q_tolerance_per_s = 1e-6; // converged when |Q_target - Q| < tol * S_rated per DER
    int max_iterations = 50;
    double initial_q_per_s = 0.0;    // starting Q guess as a fraction of S_rated
    SolverOptions solver{};
};

struct DynamicOptions {
    double dt_s = 1.0;           // simulated seconds per profile step
    double tau_s = 5.0;          // first-order inverter response time constant
    double agent_period_s = 1.0; // supervisory agent update period
    double agent_delay_s = 1.0;  // command channel delay
};

/// Per-DER operating point at a solved snapshot or timestep.
struct DerSetpoint {
    std::string der_id;
    std::string bus;
    double v_pu = 0.0;
    double p_kw = 0.0;
    double q_kvar = 0.0;
    SignedPF pf{};
    bool clamped = false;
};

struct StaticControlResult {
    PowerFlowSolution solution;
    std::vector<DerSetpoint> setpoints;  // aligned with feeder.ders
    bool converged = false;
    int control_iterations = 0;
    /// Max per-DER |Q_target - Q| after each control iteration; the full
    /// trajectory is kept so oscillation is diagnosable on non-convergence.
    std::vector<double> q_update_trajectory_kvar;
};

/// Evaluates one DER's raw curve command at a terminal voltage, before
/// capability clamping. `p_available_kw` is the instantaneous active power.
QCommand evaluate_mode_q(const ControlMode& mode, double v_pu, double p_available_kw,
                         const DerUnit& der, const CurveSettings& settings);

/// Fixed-point static solution: alternate power-flow solves with curve
/// re-evaluation at the solved terminal voltages, damping Q updates by
/// lambda, until no DER's target moves more than the tolerance. The feeder
/// must be un-normalized (natural units); base injections are per unit and
/// typically carry the loads. Mode/settings overrides, when set, replace
/// every DER's own assignment. `source_v_pu` overrides the feeder value.
StaticControlResult solve_static_with_control(
    const Feeder& feeder, const InjectionSet& base_injections,
    const std::vector<double>& der_available_p_kw,
    std::optional<ControlMode> mode_override,
    std::optional<CurveSettings> settings_override,
    const ControlOptions& opts = {},
    std::optional<double> source_v_pu = std::nullopt);

// --- Time-series machinery ---------------------------------------------

/// Command issued by a supervisory agent. Volt-PF agents issue PF commands
/// that the inverter converts to Q with its instantaneous active power;
/// every other mode issues a Q setpoint directly.
struct AgentCommand {
    enum class Kind { q_setpoint, pf_setpoint };
    Kind kind = Kind::q_setpoint;
    double q_kvar = 0.0;
    SignedPF pf{};
};

struct PendingCommand {
    double due_time_s = 0.0;
    AgentCommand command;
};

/// Supervisory agent + inverter response state for one DER.
struct InverterAgentState {
    std::string der_id;
    double command_delay_s = 0.0;
    double last_measured_v_pu = 1.0;
    double last_update_time_s = 0.0;
    bool has_updated = false;
    std::vector<PendingCommand> pending;  // ordered by due time (FIFO, constant delay)
    std::optional<AgentCommand> active_command;
    double q_actual_kvar = 0.0;  // first-order filter state
    bool clamped = false;
};

/// One supervisory-agent poll: computes the mode's raw command from the
/// measured voltage and available power and enqueues it to take effect at
/// now + command delay. Commands become the filter target once dequeued;
/// when several are due the latest wins.
InverterAgentState agent_update(InverterAgentState agent, double v_measured_pu,
                                double p_available_kw, const ControlMode& mode,
                                const CurveSettings& settings, const DerUnit& der,
                                double now_s);

/// Pops every pending command due at or before now_s; the latest one due
/// becomes the active command. Earlier due commands are superseded.
void dequeue_due_commands(InverterAgentState& agent, double now_s);

/// Aligned time series for loads, DER available power and the source
/// voltage. All series share timestamps.
struct TimeSeriesProfiles {
    std::vector<double> timestamps_s;
    std::vector<std::string> load_ids;
    std::vector<std::vector<double>> load_p_kw;   // [load][step]
    std::vector<std::vector<double>> load_q_kvar; // [load][step]
    std::vector<std::string> der_ids;
    std::vector<std::vector<double>> der_p_kw;    // [der][step]
    std::vector<double> source_v_pu;              // may be empty (use feeder value)
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t step_count() const { return timestamps_s.size(); }
    [[nodiscard]] bool empty() const { return timestamps_s.empty(); }
    void validate() const;  // throws on ragged series or non-uniform timestamps
};

/// Natural cubic-spline resampling of hourly profiles to 1-minute
/// resolution (knots reproduced exactly; DER power clamped at zero from
/// below). Fewer than 4 points falls back to linear with a warning pushed
/// onto the result. Requires uniform hourly input spacing.
TimeSeriesProfiles interpolate_profiles(const TimeSeriesProfiles& hourly);

struct ScenarioConfig {
    Feeder feeder;                      // natural units (not normalized)
    TimeSeriesProfiles profiles;        // optional; empty = use feeder.loads
    std::optional<ControlMode> mode_override;
    std::optional<CurveSettings> settings_override;
    std::optional<std::size_t> static_hour;  // static snapshot: index into profiles
    std::optional<std::pair<std::size_t, std::size_t>> step_range;  // [first, last] inclusive
    bool spline_to_minutes = true;      // interpolate hourly profiles for time-series runs
    ControlOptions control{};
    DynamicOptions dynamics{};

    void validate() const;
};

/// One solved timestep (or the single step of a static run).
struct StepRecord {
    std::size_t step_index = 0;
    double t_s = 0.0;
    bool converged = false;
    int pf_iterations = 0;
    double max_v_pu = 0.0;
    double min_v_pu = 0.0;
    int violating_buses = 0;
    std::vector<std::string> violating_bus_ids;
    double loss_kw = 0.0;
    double feederhead_p_kw = 0.0;
    double feederhead_q_kvar = 0.0;
    double total_der_q_kvar = 0.0;      // signed sum
    double total_der_q_abs_kvar = 0.0;  // sum of magnitudes
    std::vector<double> transformer_loading_percent;
    std::vector<DerSetpoint> der_records;
};

struct ScenarioResult {
    std::string mode_label;
    bool is_static = false;
    std::vector<StepRecord> steps;
    std::vector<std::string> diagnostics;
    std::size_t implausible_voltage_samples = 0;
};

/// Thrown when a time-series step fails to converge; carries the step.
class SimulationAbort : public std::runtime_error {
public:
    SimulationAbort(std::size_t step_index, const std::string& what)
        : std::runtime_error(what), step_index_(step_index) {}
    [[nodiscard]] std::size_t step_index() const noexcept { return step_index_; }

private:
    std::size_t step_index_;
};

/// Quasi-static stepper. Each step: dequeue due agent commands, advance the
/// first-order Q filters, assemble injections from the profiles, run one
/// power-flow solve (warm-started), then poll agents whose period elapsed
/// with the freshly solved voltages.
class TimeSeriesRunner {
public:
    explicit TimeSeriesRunner(ScenarioConfig config);

    [[nodiscard]] bool done() const { return next_ > last_; }
    [[nodiscard]] std::size_t current_step() const { return next_; }
    [[nodiscard]] const std::vector<InverterAgentState>& agents() const { return agents_; }
    [[nodiscard]] const TimeSeriesProfiles& profiles() const { return profiles_; }

    StepRecord step();  // throws SimulationAbort on power-flow divergence

    ScenarioResult run();

private:
    ScenarioConfig config_;
    Feeder normalized_;
    TimeSeriesProfiles profiles_;
    std::vector<InverterAgentState> agents_;
    std::vector<std::size_t> load_rows_;  // per feeder load -> profile row
    std::vector<std::size_t> der_rows_;   // per feeder DER -> profile row
    std::vector<Complex> last_voltages_;
    bool have_warm_start_ = false;
    std::size_t first_ = 0;
    std::size_t last_ = 0;
    std::size_t next_ = 0;
    std::size_t implausible_samples_ = 0;
    std::vector<std::string> diagnostics_;

    [[nodiscard]] const ControlMode& mode_for(std::size_t der_index) const;
    [[nodiscard]] const CurveSettings& settings_for(std::size_t der_index) const;
};

/// Static snapshot at config.static_hour (profiles indexed directly; with
/// no profiles the feeder's own loads and full rated DER power are used).
ScenarioResult run_static(const ScenarioConfig& config);

/// Full time-series run over config.step_range (default: every step).
ScenarioResult run_timeseries(const ScenarioConfig& config);

/// Dispatches to run_static when static_hour is set, else run_timeseries.
ScenarioResult run_scenario(const ScenarioConfig& config);

}  // namespace feedersim
