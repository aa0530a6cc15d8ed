#include "feedersim/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace feedersim {

namespace {

double base_kva_of(const Feeder& f) { return f.base_mva * 1000.0; }

std::string mode_label_of(const ScenarioConfig& config) {
    if (config.mode_override) return config.mode_override->label();
    if (config.feeder.ders.empty()) return "unity_pf";
    std::string first = config.feeder.ders.front().mode.label();
    for (const auto& der : config.feeder.ders) {
        if (der.mode.label() != first) return "mixed";
    }
    return first;
}

InjectionSet injections_from_loads(const Feeder& feeder) {
    InjectionSet inj;
    const double base_kva = base_kva_of(feeder);
    for (const auto& load : feeder.loads) {
        inj[load.bus] += Complex{-load.p_kw / base_kva, -load.q_kvar / base_kva};
    }
    return inj;
}

struct ProfileBinding {
    std::vector<std::size_t> load_rows;  // per feeder load
    std::vector<std::size_t> der_rows;   // per feeder DER
};

// Requires a 1:1 match between feeder loads/DERs and profile entities;
// every gap is collected before failing.
ProfileBinding bind_profiles(const Feeder& feeder, const TimeSeriesProfiles& profiles) {
    ProfileBinding binding;
    std::vector<std::string> gaps;

    std::unordered_map<std::string_view, std::size_t> load_rows;
    for (std::size_t r = 0; r < profiles.load_ids.size(); ++r) load_rows.emplace(profiles.load_ids[r], r);
    std::unordered_map<std::string_view, std::size_t> der_rows;
    for (std::size_t r = 0; r < profiles.der_ids.size(); ++r) der_rows.emplace(profiles.der_ids[r], r);

    std::set<std::size_t> used_loads, used_ders;
    for (const auto& load : feeder.loads) {
        auto it = load_rows.find(load.id);
        if (it == load_rows.end()) {
            gaps.push_back("no load profile for '" + load.id + "'");
            binding.load_rows.push_back(0);
        } else {
            binding.load_rows.push_back(it->second);
            used_loads.insert(it->second);
        }
    }
    for (const auto& der : feeder.ders) {
        auto it = der_rows.find(der.id);
        if (it == der_rows.end()) {
            gaps.push_back("no DER profile for '" + der.id + "'");
            binding.der_rows.push_back(0);
        } else {
            binding.der_rows.push_back(it->second);
            used_ders.insert(it->second);
        }
    }
    for (std::size_t r = 0; r < profiles.load_ids.size(); ++r) {
        if (!used_loads.count(r)) gaps.push_back("profile load '" + profiles.load_ids[r] + "' not in feeder");
    }
    for (std::size_t r = 0; r < profiles.der_ids.size(); ++r) {
        if (!used_ders.count(r)) gaps.push_back("profile DER '" + profiles.der_ids[r] + "' not in feeder");
    }

    if (!gaps.empty()) {
        std::ostringstream os;
        os << "profiles do not match the feeder:";
        for (const auto& g : gaps) os << "\n  " << g;
        throw std::invalid_argument(os.str());
    }
    return binding;
}

StepRecord make_step_record(std::size_t step_index, double t_s, const Feeder& feeder,
                            const PowerFlowSolution& sol, std::vector<DerSetpoint> setpoints) {
    StepRecord rec;
    rec.step_index = step_index;
    rec.t_s = t_s;
    rec.converged = sol.converged;
    rec.pf_iterations = sol.iterations;
    rec.max_v_pu = -1.0;
    rec.min_v_pu = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sol.v_pu.size(); ++i) {
        const double v = std::abs(sol.v_pu[i]);
        rec.max_v_pu = std::max(rec.max_v_pu, v);
        rec.min_v_pu = std::min(rec.min_v_pu, v);
        const VoltageLimits& lim = feeder.buses[i].v_limits;
        if (v > lim.max_pu || v < lim.min_pu) {
            ++rec.violating_buses;
            rec.violating_bus_ids.push_back(feeder.buses[i].id);
        }
    }
    rec.loss_kw = sol.total_loss_kw;
    rec.feederhead_p_kw = sol.feederhead_p_kw;
    rec.feederhead_q_kvar = sol.feederhead_q_kvar;
    for (const auto& sp : setpoints) {
        rec.total_der_q_kvar += sp.q_kvar;
        rec.total_der_q_abs_kvar += std::abs(sp.q_kvar);
    }
    rec.transformer_loading_percent = transformer_loading_percent(sol, feeder);
    rec.der_records = std::move(setpoints);
    return rec;
}

}  // namespace

QCommand evaluate_mode_q(const ControlMode& mode, double v_pu, double p_available_kw,
                         const DerUnit& der, const CurveSettings& settings) {
    switch (mode.kind) {
        case ControlKind::unity_pf:
            return {0.0};
        case ControlKind::volt_var:
            return voltvar_q(v_pu, der.s_rated_kva, settings);
        case ControlKind::volt_pf:
            return voltpf_q(v_pu, p_available_kw, settings);
        case ControlKind::volt_pf2:
            return voltpf2_q(v_pu, p_available_kw, der.p_rated_kw, der.s_rated_kva, settings);
        case ControlKind::constant_pf:
            return constant_pf_q(p_available_kw, mode.pf);
        case ControlKind::constant_q:
            return constant_q(mode.q_set_pu, der.s_rated_kva);
    }
    return {0.0};
}

StaticControlResult solve_static_with_control(
    const Feeder& feeder, const InjectionSet& base_injections,
    const std::vector<double>& der_available_p_kw,
    std::optional<ControlMode> mode_override,
    std::optional<CurveSettings> settings_override,
    const ControlOptions& opts,
    std::optional<double> source_v_pu) {
    if (feeder.normalized) {
        throw std::invalid_argument("solve_static_with_control expects a feeder in natural units");
    }
    if (der_available_p_kw.size() != feeder.ders.size()) {
        throw std::invalid_argument("solve_static_with_control: one available-P value per DER required");
    }
    if (!(opts.lambda > 0.0) || opts.lambda > 1.0) {
        throw std::invalid_argument("solve_static_with_control: lambda must be in (0, 1]");
    }
    if (opts.max_iterations < 1) {
        throw std::invalid_argument("solve_static_with_control: max_iterations must be >= 1");
    }
    if (settings_override) settings_override->validate();

    const std::size_t m = feeder.ders.size();
    std::vector<double> p_kw(m);
    for (std::size_t i = 0; i < m; ++i) {
        const DerUnit& der = feeder.ders[i];
        double p = der_available_p_kw[i];
        if (p < 0.0 || p > der.p_rated_kw * (1.0 + 1e-9)) {
            throw std::invalid_argument("available P for DER '" + der.id +
                                        "' outside [0, p_rated_kw]");
        }
        p_kw[i] = std::min(p, der.p_rated_kw);
    }

    Feeder normalized = per_unit_normalize(feeder);
    if (source_v_pu) normalized.source_v_pu = *source_v_pu;
    const double base_kva = base_kva_of(feeder);

    auto settings_for = [&](std::size_t i) -> const CurveSettings& {
        if (settings_override) return *settings_override;
        if (feeder.ders[i].settings) return *feeder.ders[i].settings;
        static const CurveSettings ieee = preset_ieee1547_default();
        return ieee;
    };
    auto mode_for = [&](std::size_t i) -> const ControlMode& {
        return mode_override ? *mode_override : feeder.ders[i].mode;
    };

    std::vector<double> q_kvar(m);
    for (std::size_t i = 0; i < m; ++i) q_kvar[i] = opts.initial_q_per_s * feeder.ders[i].s_rated_kva;

    StaticControlResult result;
    std::vector<Complex> warm;
    bool have_warm = false;
    std::vector<double> q_used(m, 0.0);
    std::vector<bool> clamped(m, false);
    PowerFlowSolution last_sol;

    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        q_used = q_kvar;
        InjectionSet inj = base_injections;
        for (std::size_t i = 0; i < m; ++i) {
            inj[feeder.ders[i].bus] += Complex{p_kw[i], q_kvar[i]} / base_kva;
        }
        PowerFlowSolution sol = solve_radial(normalized, inj, opts.solver, have_warm ? &warm : nullptr);
        result.control_iterations = iter;
        if (!sol.converged) {
            last_sol = std::move(sol);
            break;
        }

        double worst = 0.0;
        bool all_within = true;
        std::vector<double> target(m);
        for (std::size_t i = 0; i < m; ++i) {
            const DerUnit& der = feeder.ders[i];
            const double v = std::abs(sol.voltage(der.bus));
            const QCommand raw = evaluate_mode_q(mode_for(i), v, p_kw[i], der, settings_for(i));
            const CapabilityResult cap = apply_capability_limit(p_kw[i], raw.q_kvar, der.s_rated_kva);
            target[i] = cap.q_kvar;
            clamped[i] = cap.clamped;
            const double dq = std::abs(target[i] - q_kvar[i]);
            worst = std::max(worst, dq);
            if (dq >= opts.q_tolerance_per_s * der.s_rated_kva) all_within = false;
        }
        result.q_update_trajectory_kvar.push_back(worst);
        last_sol = std::move(sol);

        if (all_within) {
            result.converged = true;
            break;
        }
        for (std::size_t i = 0; i < m; ++i) {
            q_kvar[i] += opts.lambda * (target[i] - q_kvar[i]);
        }
        warm = last_sol.v_pu;
        have_warm = true;
    }

    result.setpoints.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const DerUnit& der = feeder.ders[i];
        DerSetpoint sp;
        sp.der_id = der.id;
        sp.bus = der.bus;
        sp.v_pu = last_sol.bus_ids.empty() ? 0.0 : std::abs(last_sol.voltage(der.bus));
        sp.p_kw = p_kw[i];
        sp.q_kvar = q_used[i];
        sp.pf = achieved_pf(sp.p_kw, sp.q_kvar);
        sp.clamped = clamped[i];
        result.setpoints.push_back(std::move(sp));
    }
    result.solution = std::move(last_sol);
    return result;
}

InverterAgentState agent_update(InverterAgentState agent, double v_measured_pu,
                                double p_available_kw, const ControlMode& mode,
                                const CurveSettings& settings, const DerUnit& der,
                                double now_s) {
    agent.last_measured_v_pu = v_measured_pu;
    agent.last_update_time_s = now_s;
    agent.has_updated = true;

    AgentCommand cmd;
    if (mode.kind == ControlKind::volt_pf) {
        cmd.kind = AgentCommand::Kind::pf_setpoint;
        cmd.pf = voltpf_pf(v_measured_pu, settings);
    } else {
        cmd.kind = AgentCommand::Kind::q_setpoint;
        cmd.q_kvar = evaluate_mode_q(mode, v_measured_pu, p_available_kw, der, settings).q_kvar;
    }
    agent.pending.push_back({now_s + agent.command_delay_s, cmd});
    return agent;
}

void dequeue_due_commands(InverterAgentState& agent, double now_s) {
    while (!agent.pending.empty() && agent.pending.front().due_time_s <= now_s + 1e-9) {
        agent.active_command = agent.pending.front().command;
        agent.pending.erase(agent.pending.begin());
    }
}

void TimeSeriesProfiles::validate() const {
    auto fail = [](const std::string& what) {
        throw std::invalid_argument("TimeSeriesProfiles: " + what);
    };
    const std::size_t n = timestamps_s.size();
    if (load_ids.size() != load_p_kw.size() || load_ids.size() != load_q_kvar.size()) {
        fail("load id/series counts disagree");
    }
    if (der_ids.size() != der_p_kw.size()) fail("DER id/series counts disagree");
    for (std::size_t i = 0; i < load_ids.size(); ++i) {
        if (load_p_kw[i].size() != n || load_q_kvar[i].size() != n) {
            fail("load '" + load_ids[i] + "' series length does not match timestamps");
        }
    }
    for (std::size_t i = 0; i < der_ids.size(); ++i) {
        if (der_p_kw[i].size() != n) {
            fail("DER '" + der_ids[i] + "' series length does not match timestamps");
        }
        for (double p : der_p_kw[i]) {
            if (p < 0.0) fail("DER '" + der_ids[i] + "' has negative available power");
        }
    }
    if (!source_v_pu.empty() && source_v_pu.size() != n) {
        fail("source voltage series length does not match timestamps");
    }
    if (n >= 2) {
        const double dt = timestamps_s[1] - timestamps_s[0];
        if (!(dt > 0.0)) fail("timestamps must be strictly increasing");
        for (std::size_t i = 2; i < n; ++i) {
            const double d = timestamps_s[i] - timestamps_s[i - 1];
            if (std::abs(d - dt) > 1e-6 * std::max(1.0, dt)) fail("timestamps are not uniformly spaced");
        }
    }
}

namespace {

// Natural cubic spline on unit-spaced knots, evaluated at x (hours).
// Beyond the last knot the last segment's polynomial extends.
class UnitSpline {
public:
    explicit UnitSpline(const std::vector<double>& y) : y_(y) {
        const std::size_t n = y.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        // Thomas algorithm for the tridiagonal system with natural ends.
        const std::size_t interior = n - 2;
        std::vector<double> diag(interior, 4.0), rhs(interior);
        for (std::size_t i = 0; i < interior; ++i) {
            rhs[i] = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        }
        for (std::size_t i = 1; i < interior; ++i) {
            const double w = 1.0 / diag[i - 1];
            diag[i] -= w;
            rhs[i] -= w * rhs[i - 1];
        }
        m_[interior] = rhs[interior - 1] / diag[interior - 1];
        for (std::size_t i = interior - 1; i >= 1; --i) {
            m_[i] = (rhs[i - 1] - m_[i + 1]) / diag[i - 1];
        }
    }

    [[nodiscard]] double operator()(double x) const {
        const std::size_t n = y_.size();
        std::size_t j = x <= 0.0 ? 0 : std::min(static_cast<std::size_t>(x), n - 2);
        const double s = x - static_cast<double>(j);
        const double b = (y_[j + 1] - y_[j]) - (2.0 * m_[j] + m_[j + 1]) / 6.0;
        const double c = m_[j] / 2.0;
        const double d = (m_[j + 1] - m_[j]) / 6.0;
        return y_[j] + s * (b + s * (c + s * d));
    }

private:
    std::vector<double> y_;
    std::vector<double> m_;  // second derivatives at the knots
};

std::vector<double> resample_to_minutes(const std::vector<double>& y, bool linear) {
    const std::size_t n = y.size();
    std::vector<double> out(n * 60);
    if (linear) {
        for (std::size_t m = 0; m < out.size(); ++m) {
            const double x = static_cast<double>(m) / 60.0;
            const std::size_t j = std::min(static_cast<std::size_t>(x), n - 2);
            const double s = x - static_cast<double>(j);
            out[m] = y[j] + s * (y[j + 1] - y[j]);
        }
        return out;
    }
    const UnitSpline spline(y);
    for (std::size_t m = 0; m < out.size(); ++m) {
        out[m] = spline(static_cast<double>(m) / 60.0);
    }
    return out;
}

}  // namespace

TimeSeriesProfiles interpolate_profiles(const TimeSeriesProfiles& hourly) {
    hourly.validate();
    const std::size_t n = hourly.step_count();
    if (n < 2) throw std::invalid_argument("interpolate_profiles: need at least 2 points");
    const double dt = hourly.timestamps_s[1] - hourly.timestamps_s[0];
    if (std::abs(dt - 3600.0) > 1e-6) {
        throw std::invalid_argument("interpolate_profiles: input spacing must be hourly");
    }

    const bool linear = n < 4;
    TimeSeriesProfiles out;
    out.warnings = hourly.warnings;
    if (linear) {
        out.warnings.push_back("fewer than 4 profile points; using linear interpolation");
    }
    out.timestamps_s.resize(n * 60);
    for (std::size_t m = 0; m < out.timestamps_s.size(); ++m) {
        out.timestamps_s[m] = hourly.timestamps_s[0] + 60.0 * static_cast<double>(m);
    }
    out.load_ids = hourly.load_ids;
    out.der_ids = hourly.der_ids;
    for (const auto& series : hourly.load_p_kw) out.load_p_kw.push_back(resample_to_minutes(series, linear));
    for (const auto& series : hourly.load_q_kvar) out.load_q_kvar.push_back(resample_to_minutes(series, linear));
    for (const auto& series : hourly.der_p_kw) {
        auto resampled = resample_to_minutes(series, linear);
        // Splines can undershoot near sunrise/sunset; available power is
        // physically nonnegative.
        for (double& v : resampled) v = std::max(0.0, v);
        out.der_p_kw.push_back(std::move(resampled));
    }
    if (!hourly.source_v_pu.empty()) out.source_v_pu = resample_to_minutes(hourly.source_v_pu, linear);
    return out;
}

void ScenarioConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ScenarioConfig: " + what); };
    if (feeder.normalized) fail("feeder must be in natural units");
    if (!(control.lambda > 0.0) || control.lambda > 1.0) fail("lambda must be in (0, 1]");
    if (!(dynamics.dt_s > 0.0)) fail("dt_s must be positive");
    if (dynamics.tau_s < 0.0) fail("tau_s must be >= 0");
    if (dynamics.agent_period_s < 0.0) fail("agent_period_s must be >= 0");
    if (dynamics.agent_delay_s < 0.0) fail("agent_delay_s must be >= 0");
    if (settings_override) settings_override->validate();
    if (static_hour && profiles.empty() && *static_hour != 0) {
        fail("static_hour requires profiles");
    }
    if (static_hour && !profiles.empty() && *static_hour >= profiles.step_count()) {
        fail("static_hour out of profile range");
    }
    if (step_range && step_range->first > step_range->second) {
        fail("step_range first > last");
    }
}

TimeSeriesRunner::TimeSeriesRunner(ScenarioConfig config) : config_(std::move(config)) {
    config_.validate();
    const ValidationReport report = validate_topology(config_.feeder);
    if (!report.valid()) {
        throw std::invalid_argument("TimeSeriesRunner: invalid feeder:\n" + report.to_string());
    }
    if (config_.profiles.empty()) {
        throw std::invalid_argument("TimeSeriesRunner: time-series run requires profiles");
    }
    config_.profiles.validate();
    normalized_ = per_unit_normalize(config_.feeder);

    const bool hourly = config_.profiles.step_count() >= 2 &&
                        std::abs(config_.profiles.timestamps_s[1] - config_.profiles.timestamps_s[0] -
                                 3600.0) <= 1e-6;
    profiles_ = (config_.spline_to_minutes && hourly) ? interpolate_profiles(config_.profiles)
                                                      : config_.profiles;
    diagnostics_ = profiles_.warnings;

    const ProfileBinding binding = bind_profiles(config_.feeder, profiles_);
    load_rows_ = binding.load_rows;
    der_rows_ = binding.der_rows;

    first_ = 0;
    last_ = profiles_.step_count() - 1;
    if (config_.step_range) {
        if (config_.step_range->second > last_) {
            throw std::invalid_argument("TimeSeriesRunner: step_range out of profile range");
        }
        first_ = config_.step_range->first;
        last_ = config_.step_range->second;
    }
    next_ = first_;

    agents_.reserve(config_.feeder.ders.size());
    for (const auto& der : config_.feeder.ders) {
        InverterAgentState agent;
        agent.der_id = der.id;
        agent.command_delay_s = config_.dynamics.agent_delay_s;
        agents_.push_back(std::move(agent));
    }
}

const ControlMode& TimeSeriesRunner::mode_for(std::size_t der_index) const {
    return config_.mode_override ? *config_.mode_override : config_.feeder.ders[der_index].mode;
}

const CurveSettings& TimeSeriesRunner::settings_for(std::size_t der_index) const {
    if (config_.settings_override) return *config_.settings_override;
    if (config_.feeder.ders[der_index].settings) return *config_.feeder.ders[der_index].settings;
    static const CurveSettings ieee = preset_ieee1547_default();
    return ieee;
}

StepRecord TimeSeriesRunner::step() {
    if (done()) throw std::logic_error("TimeSeriesRunner::step called past the end");
    const std::size_t k = next_;
    const double t = static_cast<double>(k) * config_.dynamics.dt_s;
    const double dt = config_.dynamics.dt_s;
    const double tau = config_.dynamics.tau_s;
    const double base_kva = base_kva_of(config_.feeder);
    const std::size_t m = config_.feeder.ders.size();

    // Inverter side: dequeue due commands, retarget, advance the filters.
    std::vector<double> p_avail(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const DerUnit& der = config_.feeder.ders[i];
        InverterAgentState& agent = agents_[i];

        double p = profiles_.der_p_kw[der_rows_[i]][k];
        if (p > der.p_rated_kw) {
            if (p > der.p_rated_kw * (1.0 + 1e-6)) {
                diagnostics_.push_back("step " + std::to_string(k) + ": DER '" + der.id +
                                       "' available P clamped to p_rated_kw");
            }
            p = der.p_rated_kw;
        }
        p_avail[i] = p;

        dequeue_due_commands(agent, t);

        double q_target = 0.0;
        if (agent.active_command) {
            if (agent.active_command->kind == AgentCommand::Kind::pf_setpoint) {
                q_target = q_from_pf(p, agent.active_command->pf).q_kvar;
            } else {
                q_target = agent.active_command->q_kvar;
            }
        }
        CapabilityResult cap = apply_capability_limit(p, q_target, der.s_rated_kva);
        q_target = cap.q_kvar;
        agent.clamped = cap.clamped;

        const double alpha = tau <= 0.0 ? 1.0 : std::min(1.0, dt / tau);
        agent.q_actual_kvar += alpha * (q_target - agent.q_actual_kvar);
        const CapabilityResult actual = apply_capability_limit(p, agent.q_actual_kvar, der.s_rated_kva);
        agent.q_actual_kvar = actual.q_kvar;
        agent.clamped = agent.clamped || actual.clamped;
    }

    // Network side: one quasi-static solve.
    InjectionSet inj;
    for (std::size_t i = 0; i < config_.feeder.loads.size(); ++i) {
        const Load& load = config_.feeder.loads[i];
        const std::size_t row = load_rows_[i];
        inj[load.bus] += Complex{-profiles_.load_p_kw[row][k], -profiles_.load_q_kvar[row][k]} / base_kva;
    }
    for (std::size_t i = 0; i < m; ++i) {
        inj[config_.feeder.ders[i].bus] += Complex{p_avail[i], agents_[i].q_actual_kvar} / base_kva;
    }
    if (!profiles_.source_v_pu.empty()) {
        normalized_.source_v_pu = profiles_.source_v_pu[k];
    }

    PowerFlowSolution sol = solve_radial(normalized_, inj, config_.control.solver,
                                         have_warm_start_ ? &last_voltages_ : nullptr);
    if (!sol.converged) {
        throw SimulationAbort(k, "power flow diverged at step " + std::to_string(k));
    }
    last_voltages_ = sol.v_pu;
    have_warm_start_ = true;

    // Supervisory side: agents whose period elapsed poll the fresh solution.
    for (std::size_t i = 0; i < m; ++i) {
        InverterAgentState& agent = agents_[i];
        if (agent.has_updated && t - agent.last_update_time_s < config_.dynamics.agent_period_s - 1e-9) {
            continue;
        }
        const double v = std::abs(sol.voltage(config_.feeder.ders[i].bus));
        if (!plausible_voltage(v)) ++implausible_samples_;
        agents_[i] = agent_update(std::move(agents_[i]), v, p_avail[i], mode_for(i),
                                  settings_for(i), config_.feeder.ders[i], t);
    }

    std::vector<DerSetpoint> setpoints;
    setpoints.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const DerUnit& der = config_.feeder.ders[i];
        DerSetpoint sp;
        sp.der_id = der.id;
        sp.bus = der.bus;
        sp.v_pu = std::abs(sol.voltage(der.bus));
        sp.p_kw = p_avail[i];
        sp.q_kvar = agents_[i].q_actual_kvar;
        sp.pf = achieved_pf(sp.p_kw, sp.q_kvar);
        sp.clamped = agents_[i].clamped;
        setpoints.push_back(std::move(sp));
    }

    StepRecord rec = make_step_record(k, t, config_.feeder, sol, std::move(setpoints));
    ++next_;
    return rec;
}

ScenarioResult TimeSeriesRunner::run() {
    ScenarioResult result;
    result.mode_label = mode_label_of(config_);
    result.is_static = false;
    result.steps.reserve(last_ - first_ + 1);
    while (!done()) result.steps.push_back(step());
    result.diagnostics = diagnostics_;
    result.implausible_voltage_samples = implausible_samples_;
    return result;
}

ScenarioResult run_static(const ScenarioConfig& config) {
    config.validate();
    const ValidationReport report = validate_topology(config.feeder);
    if (!report.valid()) {
        throw std::invalid_argument("run_static: invalid feeder:\n" + report.to_string());
    }

    InjectionSet base;
    std::vector<double> der_p(config.feeder.ders.size(), 0.0);
    std::optional<double> source_v;
    if (!config.profiles.empty()) {
        config.profiles.validate();
        const std::size_t idx = config.static_hour.value_or(0);
        if (idx >= config.profiles.step_count()) {
            throw std::invalid_argument("run_static: static_hour out of profile range");
        }
        const ProfileBinding binding = bind_profiles(config.feeder, config.profiles);
        const double base_kva = base_kva_of(config.feeder);
        for (std::size_t i = 0; i < config.feeder.loads.size(); ++i) {
            const std::size_t row = binding.load_rows[i];
            base[config.feeder.loads[i].bus] +=
                Complex{-config.profiles.load_p_kw[row][idx], -config.profiles.load_q_kvar[row][idx]} /
                base_kva;
        }
        for (std::size_t i = 0; i < config.feeder.ders.size(); ++i) {
            der_p[i] = config.profiles.der_p_kw[binding.der_rows[i]][idx];
        }
        if (!config.profiles.source_v_pu.empty()) source_v = config.profiles.source_v_pu[idx];
    } else {
        base = injections_from_loads(config.feeder);
        for (std::size_t i = 0; i < config.feeder.ders.size(); ++i) {
            der_p[i] = config.feeder.ders[i].p_rated_kw;
        }
    }

    StaticControlResult ctl = solve_static_with_control(
        config.feeder, base, der_p, config.mode_override, config.settings_override,
        config.control, source_v);

    ScenarioResult result;
    result.mode_label = mode_label_of(config);
    result.is_static = true;
    StepRecord rec = make_step_record(config.static_hour.value_or(0), 0.0, config.feeder,
                                      ctl.solution, ctl.setpoints);
    rec.converged = ctl.converged && ctl.solution.converged;
    result.steps.push_back(std::move(rec));

    for (const auto& sp : ctl.setpoints) {
        if (!plausible_voltage(sp.v_pu)) ++result.implausible_voltage_samples;
    }
    if (!ctl.converged) {
        std::ostringstream os;
        os << "control iteration did not converge after " << ctl.control_iterations
           << " iterations; max |dQ| trajectory (kvar):";
        for (double d : ctl.q_update_trajectory_kvar) os << " " << d;
        result.diagnostics.push_back(os.str());
    }
    return result;
}

ScenarioResult run_timeseries(const ScenarioConfig& config) {
    return TimeSeriesRunner(config).run();
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
    // A single profile point has no dynamics to step; it is the snapshot.
    if (config.static_hour || config.profiles.empty() || config.profiles.step_count() == 1) {
        return run_static(config);
    }
    return run_timeseries(config);
}

}  // namespace feedersim
