#include <doctest.h>

#include <cmath>

#include "feedersim/sim_engine.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

using namespace feedersim;

namespace {

// Two-bus case with enough reverse flow to land in the absorption droop:
// z = 0.02 + j0.04 p.u., 100 kW + j30 kvar load and a 450 kVA / 400 kW DER
// at the receiving bus, source at 1.04 p.u.
Feeder make_der_feeder() {
    Feeder f = test::make_two_bus_feeder(0.02, 0.04, 1.04);
    f.loads.push_back({"l0", "b1", 100.0, 30.0});
    f.ders.push_back({"d0", "b1", 450.0, 400.0, ControlMode::unity_pf(), {}});
    return f;
}

InjectionSet load_injections(const Feeder& f) {
    InjectionSet inj;
    for (const auto& load : f.loads) {
        inj[load.bus] += Complex{-load.p_kw, -load.q_kvar} / (f.base_mva * 1000.0);
    }
    return inj;
}

// Engine-equivalent curve in p.u. for the bisection oracle.
auto curve_q_pu(const ControlMode& mode, const DerUnit& der, const CurveSettings& settings,
                double p_avail_kw) {
    return [=](double v) {
        const QCommand raw = evaluate_mode_q(mode, v, p_avail_kw, der, settings);
        const CapabilityResult cap = apply_capability_limit(p_avail_kw, raw.q_kvar, der.s_rated_kva);
        return cap.q_kvar / 1000.0;
    };
}

TimeSeriesProfiles constant_profiles(const Feeder& f, double p_der_kw, std::size_t steps,
                                     double spacing_s = 60.0) {
    TimeSeriesProfiles p;
    p.timestamps_s.resize(steps);
    for (std::size_t k = 0; k < steps; ++k) p.timestamps_s[k] = spacing_s * static_cast<double>(k);
    for (const auto& load : f.loads) {
        p.load_ids.push_back(load.id);
        p.load_p_kw.emplace_back(steps, load.p_kw);
        p.load_q_kvar.emplace_back(steps, load.q_kvar);
    }
    for (const auto& der : f.ders) {
        p.der_ids.push_back(der.id);
        p.der_p_kw.emplace_back(steps, p_der_kw);
    }
    p.source_v_pu.assign(steps, f.source_v_pu);
    return p;
}

}  // namespace

TEST_CASE("deadband snapshot converges in one control iteration with zero Q") {
    Feeder f = test::make_two_bus_feeder(0.01, 0.02, 1.0);
    f.loads.push_back({"l0", "b1", 10.0, 3.0});
    f.ders.push_back({"d0", "b1", 20.0, 15.0, ControlMode::volt_var(), {}});

    const auto result = solve_static_with_control(f, load_injections(f), {15.0},
                                                  ControlMode::volt_var(),
                                                  preset_ieee1547_default());
    REQUIRE(result.converged);
    CHECK(result.control_iterations == 1);
    CHECK(result.setpoints[0].q_kvar == 0.0);
    CHECK(result.setpoints[0].pf.is_unity());
}

TEST_CASE("static fixed point matches the bisection oracle from both starts") {
    const Feeder f = make_der_feeder();
    const CurveSettings settings = preset_ieee1547_default();
    const double p_avail = 300.0;

    for (const auto& mode : {ControlMode::volt_var(), ControlMode::volt_pf(), ControlMode::volt_pf2()}) {
        CAPTURE(mode.label());
        const auto oracle = test::solve_control_fixed_point(
            curve_q_pu(mode, f.ders[0], settings, p_avail), 1.04, 0.02, 0.04, 0.1, 0.03,
            p_avail / 1000.0, 0.25);
        REQUIRE(oracle.v_pu > 1.02);  // the case must exercise the droop region

        for (double q0 : {0.0, -0.44}) {
            ControlOptions opts;
            opts.initial_q_per_s = q0;
            const auto result = solve_static_with_control(f, load_injections(f), {p_avail},
                                                          mode, settings, opts);
            REQUIRE(result.converged);
            const double q_pu = result.setpoints[0].q_kvar / 1000.0;
            CHECK(std::abs(q_pu - oracle.q_pu) < 1e-6);
            CHECK(std::abs(result.setpoints[0].v_pu - oracle.v_pu) < 1e-6);
        }
    }
}

TEST_CASE("fixed-point soundness: re-evaluating the curves moves nothing") {
    const Feeder f = make_der_feeder();
    const CurveSettings settings = preset_ieee1547_default();
    const ControlOptions opts;
    const auto result = solve_static_with_control(f, load_injections(f), {300.0},
                                                  ControlMode::volt_pf(), settings, opts);
    REQUIRE(result.converged);
    const auto& sp = result.setpoints[0];
    const QCommand target = evaluate_mode_q(ControlMode::volt_pf(), sp.v_pu, sp.p_kw, f.ders[0], settings);
    CHECK(std::abs(target.q_kvar - sp.q_kvar) < opts.q_tolerance_per_s * f.ders[0].s_rated_kva);
}

TEST_CASE("halving the relaxation changes the path, not the fixed point") {
    const Feeder f = make_der_feeder();
    ControlOptions a;
    a.lambda = 0.5;
    ControlOptions b;
    b.lambda = 0.25;
    b.max_iterations = 100;
    const auto ra = solve_static_with_control(f, load_injections(f), {300.0},
                                              ControlMode::volt_var(), preset_ieee1547_default(), a);
    const auto rb = solve_static_with_control(f, load_injections(f), {300.0},
                                              ControlMode::volt_var(), preset_ieee1547_default(), b);
    REQUIRE(ra.converged);
    REQUIRE(rb.converged);
    CHECK(std::abs(ra.setpoints[0].q_kvar - rb.setpoints[0].q_kvar) <
          10.0 * a.q_tolerance_per_s * f.ders[0].s_rated_kva);
}

TEST_CASE("unity mode keeps Q at zero") {
    const Feeder f = make_der_feeder();
    const auto result = solve_static_with_control(f, load_injections(f), {300.0},
                                                  ControlMode::unity_pf(), preset_ieee1547_default());
    REQUIRE(result.converged);
    CHECK(result.setpoints[0].q_kvar == 0.0);
}

TEST_CASE("non-convergence carries the Q trajectory") {
    const Feeder f = make_der_feeder();
    ControlOptions opts;
    opts.max_iterations = 2;
    opts.lambda = 1.0;
    opts.q_tolerance_per_s = 1e-15;  // unreachable
    const auto result = solve_static_with_control(f, load_injections(f), {300.0},
                                                  ControlMode::volt_var(), preset_ieee1547_default(),
                                                  opts);
    CHECK_FALSE(result.converged);
    CHECK(result.q_update_trajectory_kvar.size() == 2);
}

TEST_CASE("agent update enqueues the mode command with the channel delay") {
    const Feeder f = make_der_feeder();
    const CurveSettings settings = preset_ieee1547_default();
    InverterAgentState agent;
    agent.der_id = "d0";
    agent.command_delay_s = 1.0;

    SUBCASE("deadband voltage commands zero") {
        agent = agent_update(agent, 1.0, 5.0, ControlMode::volt_var(), settings, f.ders[0], 0.0);
        REQUIRE(agent.pending.size() == 1);
        CHECK(agent.pending[0].due_time_s == 1.0);
        CHECK(agent.pending[0].command.kind == AgentCommand::Kind::q_setpoint);
        CHECK(agent.pending[0].command.q_kvar == 0.0);
    }

    SUBCASE("volt-pf issues a PF command that tracks instantaneous P") {
        agent = agent_update(agent, 1.08, 1.0, ControlMode::volt_pf(), settings, f.ders[0], 2.0);
        REQUIRE(agent.pending.size() == 1);
        CHECK(agent.pending[0].due_time_s == 3.0);
        REQUIRE(agent.pending[0].command.kind == AgentCommand::Kind::pf_setpoint);
        CHECK(agent.pending[0].command.pf == SignedPF::absorb(0.9));
        // Converted with the instantaneous active power at dequeue time.
        const double q1 = q_from_pf(1.0, agent.pending[0].command.pf).q_kvar;
        CHECK(q1 == doctest::Approx(-std::tan(std::acos(0.9))).epsilon(1e-12));
        const double q2 = q_from_pf(0.5, agent.pending[0].command.pf).q_kvar;
        CHECK(q2 == doctest::Approx(0.5 * q1).epsilon(1e-12));
    }

    SUBCASE("latest due command wins") {
        agent = agent_update(agent, 1.08, 1.0, ControlMode::volt_var(), settings, f.ders[0], 0.0);
        agent = agent_update(agent, 1.00, 1.0, ControlMode::volt_var(), settings, f.ders[0], 0.5);
        REQUIRE(agent.pending.size() == 2);
        dequeue_due_commands(agent, 2.0);
        CHECK(agent.pending.empty());
        REQUIRE(agent.active_command.has_value());
        CHECK(agent.active_command->q_kvar == 0.0);  // the later, in-deadband command
    }

    SUBCASE("commands before their due time stay pending") {
        agent = agent_update(agent, 1.08, 1.0, ControlMode::volt_var(), settings, f.ders[0], 0.0);
        dequeue_due_commands(agent, 0.5);
        CHECK_FALSE(agent.active_command.has_value());
        CHECK(agent.pending.size() == 1);
    }
}

TEST_CASE("interpolation reproduces knots and stays exact on affine data") {
    TimeSeriesProfiles hourly;
    hourly.timestamps_s.resize(24);
    for (int h = 0; h < 24; ++h) hourly.timestamps_s[h] = 3600.0 * h;
    hourly.load_ids = {"l0"};
    std::vector<double> wiggly(24), ramp(24);
    test::TestRng rng(3);
    for (int h = 0; h < 24; ++h) {
        wiggly[h] = rng.uniform(1.0, 9.0);
        ramp[h] = static_cast<double>(h) / 23.0;
    }
    hourly.load_p_kw = {wiggly};
    hourly.load_q_kvar = {ramp};
    hourly.der_ids = {"d0"};
    std::vector<double> spiky(24, 0.0);
    spiky[12] = 10.0;  // forces spline undershoot next to the spike
    hourly.der_p_kw = {spiky};
    hourly.source_v_pu.assign(24, 1.02);

    const TimeSeriesProfiles minute = interpolate_profiles(hourly);
    REQUIRE(minute.step_count() == 1440);
    CHECK(minute.timestamps_s[1] - minute.timestamps_s[0] == 60.0);

    for (int h = 0; h < 23; ++h) {
        CHECK(minute.load_p_kw[0][60 * h] == wiggly[h]);  // knots are exact
    }
    CHECK(minute.load_p_kw[0][60 * 23] == doctest::Approx(wiggly[23]).epsilon(1e-12));

    // Natural spline of affine data is the same affine function.
    for (int m = 0; m < 1440; m += 7) {
        const double x = static_cast<double>(m) / 60.0 / 23.0;
        CHECK(std::abs(minute.load_q_kvar[0][m] - x) < 1e-9);
    }

    // Constant series stay constant.
    for (int m = 0; m < 1440; m += 11) CHECK(minute.source_v_pu[m] == 1.02);

    // DER power never goes negative despite the spike.
    for (double p : minute.der_p_kw[0]) CHECK(p >= 0.0);
}

TEST_CASE("interpolation falls back to linear below four points") {
    TimeSeriesProfiles hourly;
    hourly.timestamps_s = {0.0, 3600.0, 7200.0};
    hourly.load_ids = {"l0"};
    hourly.load_p_kw = {{1.0, 2.0, 3.0}};
    hourly.load_q_kvar = {{0.0, 0.0, 0.0}};
    const TimeSeriesProfiles minute = interpolate_profiles(hourly);
    REQUIRE(minute.step_count() == 180);
    bool warned = false;
    for (const auto& w : minute.warnings) warned = warned || w.find("linear") != std::string::npos;
    CHECK(warned);
    CHECK(minute.load_p_kw[0][90] == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("interpolation requires hourly spacing") {
    TimeSeriesProfiles p;
    p.timestamps_s = {0.0, 60.0, 120.0, 180.0};
    p.load_ids = {};
    CHECK_THROWS_AS(interpolate_profiles(p), std::invalid_argument);
}

TEST_CASE("dynamic steady state matches the static fixed point when ideal") {
    Feeder f = make_der_feeder();
    f.ders[0].mode = ControlMode::volt_pf();

    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 300.0, 40);
    config.spline_to_minutes = false;
    config.dynamics.tau_s = 0.0;
    config.dynamics.agent_delay_s = 0.0;
    config.dynamics.agent_period_s = 1.0;
    config.dynamics.dt_s = 1.0;

    const ScenarioResult dynamic = run_timeseries(config);
    REQUIRE(dynamic.steps.size() == 40);
    for (const auto& step : dynamic.steps) REQUIRE(step.converged);

    const auto st = solve_static_with_control(f, load_injections(f), {300.0},
                                              ControlMode::volt_pf(), preset_ieee1547_default());
    REQUIRE(st.converged);
    const auto& last = dynamic.steps.back().der_records[0];
    CHECK(std::abs(last.q_kvar - st.setpoints[0].q_kvar) < 1e-6 * f.ders[0].s_rated_kva);
    CHECK(std::abs(last.v_pu - st.setpoints[0].v_pu) < 1e-6);
}

TEST_CASE("first-order response reaches 99 percent within five time constants") {
    Feeder f = make_der_feeder();
    f.ders[0].mode = ControlMode::volt_var();

    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 300.0, 40);
    config.spline_to_minutes = false;
    config.dynamics.tau_s = 5.0;
    config.dynamics.agent_delay_s = 0.0;
    config.dynamics.agent_period_s = 1.0;
    config.dynamics.dt_s = 1.0;

    const ScenarioResult dynamic = run_timeseries(config);
    const double q_fix = dynamic.steps.back().der_records[0].q_kvar;
    REQUIRE(std::abs(q_fix) > 1.0);  // the case must actually demand Q
    const double q_at_5tau = dynamic.steps[25].der_records[0].q_kvar;
    CHECK(std::abs(q_at_5tau - q_fix) <= 0.01 * std::abs(q_fix));
}

TEST_CASE("a one-second command delay leaves the steady state unchanged") {
    Feeder f = make_der_feeder();
    f.ders[0].mode = ControlMode::volt_pf();

    auto run_with_delay = [&](double delay) {
        ScenarioConfig config;
        config.feeder = f;
        config.profiles = constant_profiles(f, 300.0, 120);
        config.spline_to_minutes = false;
        config.dynamics.tau_s = 5.0;
        config.dynamics.agent_delay_s = delay;
        config.dynamics.agent_period_s = 1.0;
        config.dynamics.dt_s = 1.0;
        return run_timeseries(config);
    };

    const ScenarioResult ideal = run_with_delay(0.0);
    const ScenarioResult delayed = run_with_delay(1.0);
    const auto& a = ideal.steps.back().der_records[0];
    const auto& b = delayed.steps.back().der_records[0];
    CHECK(std::abs(a.q_kvar - b.q_kvar) < 1e-6 * f.ders[0].s_rated_kva);
    CHECK(std::abs(a.v_pu - b.v_pu) < 1e-6);
}

TEST_CASE("a feeder without DERs runs as a plain time-series load flow") {
    Feeder f = test::make_two_bus_feeder(0.01, 0.02, 1.0);
    f.loads.push_back({"l0", "b1", 50.0, 10.0});

    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 0.0, 5);
    config.spline_to_minutes = false;

    const ScenarioResult result = run_timeseries(config);
    REQUIRE(result.steps.size() == 5);
    for (const auto& step : result.steps) {
        CHECK(step.converged);
        CHECK(step.total_der_q_abs_kvar == 0.0);
        CHECK(step.der_records.empty());
    }
}

TEST_CASE("power-flow divergence aborts with the step index") {
    Feeder f = test::make_two_bus_feeder(0.05, 0.1, 1.0);
    f.loads.push_back({"l0", "b1", 100.0, 0.0});

    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 0.0, 6);
    config.profiles.load_p_kw[0][3] = 3.0e7;  // far beyond maximum transfer
    config.spline_to_minutes = false;

    try {
        run_timeseries(config);
        FAIL("expected SimulationAbort");
    } catch (const SimulationAbort& abort) {
        CHECK(abort.step_index() == 3);
    }
}

TEST_CASE("static run without profiles uses feeder loads and rated power") {
    Feeder f = make_der_feeder();
    f.ders[0].mode = ControlMode::volt_var();
    ScenarioConfig config;
    config.feeder = f;
    const ScenarioResult result = run_scenario(config);
    REQUIRE(result.is_static);
    REQUIRE(result.steps.size() == 1);
    CHECK(result.steps[0].der_records[0].p_kw == 400.0);
    CHECK(result.steps[0].converged);
}

TEST_CASE("a one-step scenario is the static solve") {
    Feeder f = make_der_feeder();
    f.ders[0].mode = ControlMode::volt_var();
    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 300.0, 1);
    const ScenarioResult result = run_scenario(config);
    REQUIRE(result.is_static);

    const auto st = solve_static_with_control(f, load_injections(f), {300.0}, std::nullopt,
                                              std::nullopt);
    CHECK(result.steps[0].der_records[0].q_kvar == st.setpoints[0].q_kvar);
    CHECK(result.steps[0].der_records[0].v_pu == st.setpoints[0].v_pu);
}

TEST_CASE("time-series runs are deterministic") {
    Feeder f = make_der_feeder();
    f.ders[0].mode = ControlMode::volt_pf2();
    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 250.0, 20);
    config.spline_to_minutes = false;

    const ScenarioResult a = run_timeseries(config);
    const ScenarioResult b = run_timeseries(config);
    REQUIRE(a.steps.size() == b.steps.size());
    for (std::size_t k = 0; k < a.steps.size(); ++k) {
        CHECK(a.steps[k].max_v_pu == b.steps[k].max_v_pu);
        CHECK(a.steps[k].loss_kw == b.steps[k].loss_kw);
        CHECK(a.steps[k].der_records[0].q_kvar == b.steps[k].der_records[0].q_kvar);
    }
}

TEST_CASE("profile binding lists every gap") {
    Feeder f = make_der_feeder();
    ScenarioConfig config;
    config.feeder = f;
    config.profiles = constant_profiles(f, 300.0, 5);
    config.profiles.der_ids[0] = "wrong_id";
    config.spline_to_minutes = false;
    try {
        run_timeseries(config);
        FAIL("expected binding error");
    } catch (const std::invalid_argument& e) {
        const std::string what = e.what();
        CHECK(what.find("d0") != std::string::npos);
        CHECK(what.find("wrong_id") != std::string::npos);
    }
}
