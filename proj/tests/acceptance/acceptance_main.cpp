// Acceptance suite: one pass/fail line per criterion. Exit code is the
// number of failed criteria.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "feedersim/ingest_io.hpp"
#include "feedersim/metrics_report.hpp"
#include "feedersim/sim_engine.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace feedersim;
using Clock = std::chrono::steady_clock;

namespace {

struct CheckFailure {
    std::string message;
};

void require(bool ok, const std::string& message) {
    if (!ok) throw CheckFailure{message};
}

class Runner {
public:
    void criterion(int id, const std::string& name, const std::function<std::string()>& body) {
        try {
            const std::string detail = body();
            std::cout << "PASS criterion " << id << ": " << name
                      << (detail.empty() ? "" : " (" + detail + ")") << "\n";
        } catch (const CheckFailure& f) {
            std::cout << "FAIL criterion " << id << ": " << name << " -- " << f.message << "\n";
            ++failures_;
        } catch (const std::exception& e) {
            std::cout << "FAIL criterion " << id << ": " << name << " -- exception: " << e.what()
                      << "\n";
            ++failures_;
        }
    }

    [[nodiscard]] int failures() const { return failures_; }

private:
    int failures_ = 0;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// The seeded 60-bus study case shared by criteria 6-8.
SyntheticFeederParams study_params() {
    SyntheticFeederParams params;
    params.bus_count = 60;
    params.penetration_percent = 200.0;
    params.availability_min = 0.2;
    params.availability_max = 1.0;
    params.seed = 42;
    return params;
}

constexpr int k_study_hour = 13;

ScenarioConfig study_static_config(const SyntheticFeeder& synth, ControlMode mode) {
    ScenarioConfig config;
    config.feeder = synth.feeder;
    config.profiles = synth.profiles;
    config.mode_override = mode;
    config.settings_override = preset_ieee1547_default();
    config.static_hour = k_study_hour;
    return config;
}

Feeder make_two_bus_der_feeder() {
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

TimeSeriesProfiles frozen_profiles(const Feeder& f, double p_der_kw, std::size_t steps) {
    TimeSeriesProfiles p;
    p.timestamps_s.resize(steps);
    for (std::size_t k = 0; k < steps; ++k) p.timestamps_s[k] = 60.0 * static_cast<double>(k);
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

int run_cli(const std::string& args, const fs::path& log) {
#ifdef FEEDERSIM_CLI_PATH
    const std::string cmd = std::string(FEEDERSIM_CLI_PATH) + " " + args + " > " + log.string() +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
#else
    (void)args;
    (void)log;
    return -1;
#endif
}

}  // namespace

int main() {
    Runner runner;
    const fs::path work = fs::temp_directory_path() / "feedersim_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    runner.criterion(1, "volt-PF identity over a dense (V, P) grid", [] {
        const CurveSettings s = preset_ieee1547_default();
        const double p_rated = 8.0;
        const auto start = Clock::now();
        std::size_t points = 0;
        for (int vi = 0; vi <= 300; ++vi) {
            const double v = 0.85 + 1e-3 * vi;
            for (int pi = 0; pi <= 40; ++pi) {
                const double p = p_rated * pi / 40.0;
                const double direct = voltpf_q(v, p, s).q_kvar;
                const double composed = q_from_pf(p, voltpf_pf(v, s)).q_kvar;
                require(std::abs(direct - composed) < 1e-12,
                        "identity violated at v=" + std::to_string(v) + " p=" + std::to_string(p));
                ++points;
            }
        }
        const double elapsed = seconds_since(start);
        require(points >= 10000, "grid too small");
        require(elapsed < 1.0, "took " + std::to_string(elapsed) + " s");
        std::ostringstream os;
        os << points << " points in " << elapsed << " s";
        return os.str();
    });

    runner.criterion(2, "volt-PF ver. 2 equals volt-VAr at rated P and is homogeneous in P", [] {
        const CurveSettings s = preset_ieee1547_default();
        const double p_rated = 8.0;
        const double s_rated = 10.0;
        for (int vi = 0; vi < 1000; ++vi) {
            const double v = 0.85 + 0.30 * vi / 999.0;
            const double v2 = voltpf2_q(v, p_rated, p_rated, s_rated, s).q_kvar;
            const double vv = voltvar_q(v, s_rated, s).q_kvar;
            require(v2 == vv, "not exactly equal at v=" + std::to_string(v));
            for (double alpha : {0.1, 0.25, 0.5, 0.9}) {
                const double lhs = voltpf2_q(v, alpha * p_rated, p_rated, s_rated, s).q_kvar;
                require(std::abs(lhs - alpha * vv) < 1e-12,
                        "homogeneity violated at v=" + std::to_string(v));
            }
        }
        return std::string("1000 voltages, 4 scalings");
    });

    runner.criterion(3, "named IEEE 1547-2018 default curve points", [] {
        const CurveSettings s = preset_ieee1547_default();
        const double S = 10.0;
        require(std::abs(voltvar_q(1.08, S, s).q_kvar - (-0.44 * S)) < 1e-12, "Q(1.08)");
        require(std::abs(voltvar_q(0.92, S, s).q_kvar - (0.44 * S)) < 1e-12, "Q(0.92)");
        for (int i = 0; i <= 100; ++i) {
            const double v = 0.98 + 0.04 * i / 100.0;
            require(voltvar_q(v, S, s).q_kvar == 0.0, "deadband not zero at v=" + std::to_string(v));
        }
        const SignedPF low = voltpf_pf(0.92, s);
        const SignedPF high = voltpf_pf(1.08, s);
        require(std::abs(low.magnitude() - 0.9) < 1e-12 && low.excitation() == Excitation::inject,
                "PF(0.92)");
        require(std::abs(high.magnitude() - 0.9) < 1e-12 && high.excitation() == Excitation::absorb,
                "PF(1.08)");
        return std::string();
    });

    runner.criterion(4, "two-bus solver agreement with the closed form", [] {
        test::TestRng rng(1234);
        int cases = 0;
        int reverse = 0;
        while (cases < 100) {
            const double r = rng.uniform(0.002, 0.05);
            const double x = rng.uniform(0.002, 0.1);
            const double vs = rng.uniform(0.95, 1.05);
            double p = rng.uniform(-0.8, 0.8);
            if (cases % 2 == 0) p = -std::abs(p);
            const double q = rng.uniform(-0.4, 0.4);
            const double expected = test::two_bus_voltage(vs, r, x, p, q);
            if (!std::isfinite(expected)) continue;

            Feeder f = per_unit_normalize(test::make_two_bus_feeder(r, x, vs));
            InjectionSet inj{{"b1", Complex{-p, -q}}};
            const PowerFlowSolution sol = solve_radial(f, inj);
            require(sol.converged, "solver diverged");
            require(std::abs(std::abs(sol.voltage("b1")) - expected) < 1e-8,
                    "voltage mismatch vs closed form");
            const double residual =
                -p + sol.feederhead_p_kw / 1000.0 - sol.total_loss_kw / 1000.0;
            require(std::abs(residual) < 1e-6, "power balance residual " + std::to_string(residual));
            if (p < 0.0 && std::abs(sol.voltage("b1")) > vs) {
                require(sol.feederhead_p_kw < 0.0, "reverse flow not seen at the feederhead");
                ++reverse;
            }
            ++cases;
        }
        require(reverse >= 25, "too few voltage-raising reverse-flow draws: " +
                                   std::to_string(reverse));
        std::ostringstream os;
        os << cases << " draws, " << reverse << " with voltage rise under reverse flow";
        return os.str();
    });

    runner.criterion(5, "static control fixed point matches the bisection oracle", [] {
        const Feeder f = make_two_bus_der_feeder();
        const CurveSettings settings = preset_ieee1547_default();
        const double p_avail = 300.0;
        for (const auto& mode :
             {ControlMode::volt_var(), ControlMode::volt_pf(), ControlMode::volt_pf2()}) {
            auto curve = [&](double v) {
                const QCommand raw = evaluate_mode_q(mode, v, p_avail, f.ders[0], settings);
                return apply_capability_limit(p_avail, raw.q_kvar, f.ders[0].s_rated_kva).q_kvar /
                       1000.0;
            };
            const auto oracle = test::solve_control_fixed_point(curve, 1.04, 0.02, 0.04, 0.1, 0.03,
                                                                p_avail / 1000.0, 0.25);
            require(oracle.v_pu > 1.02, "case must land in the droop region");
            for (double q0 : {0.0, -0.44}) {
                ControlOptions opts;
                opts.initial_q_per_s = q0;
                const auto result = solve_static_with_control(f, load_injections(f), {p_avail},
                                                              mode, settings, opts);
                require(result.converged, mode.label() + " did not converge");
                require(std::abs(result.setpoints[0].q_kvar / 1000.0 - oracle.q_pu) < 1e-6,
                        mode.label() + " Q off oracle from q0=" + std::to_string(q0));
                require(std::abs(result.setpoints[0].v_pu - oracle.v_pu) < 1e-6,
                        mode.label() + " V off oracle from q0=" + std::to_string(q0));
            }
        }
        return std::string("volt_var, volt_pf, volt_pf2 from two starts");
    });

    runner.criterion(6, "regulation and fairness on the seeded 60-bus feeder", [] {
        const auto start = Clock::now();
        const SyntheticFeeder synth = generate_synthetic_feeder(study_params());

        const ScenarioResult baseline =
            run_static(study_static_config(synth, ControlMode::unity_pf()));
        const ScenarioResult voltvar =
            run_static(study_static_config(synth, ControlMode::volt_var()));
        const ScenarioResult voltpf = run_static(study_static_config(synth, ControlMode::volt_pf()));

        const ModeMetrics mb = compute_mode_metrics(baseline, synth.feeder);
        const ModeMetrics mv = compute_mode_metrics(voltvar, synth.feeder);
        const ModeMetrics mp = compute_mode_metrics(voltpf, synth.feeder);

        require(mb.violation_count >= 1, "baseline has no overvoltage violation");
        require(baseline.steps[0].converged, "baseline did not converge");
        require(voltvar.steps[0].converged && voltpf.steps[0].converged,
                "a controlled run did not converge");
        require(mv.violation_count == 0,
                "volt-VAr leaves " + std::to_string(mv.violation_count) + " violations");
        require(mp.violation_count == 0,
                "volt-PF leaves " + std::to_string(mp.violation_count) + " violations");
        require(mp.lowest_der_pf >= 0.9 - 1e-6,
                "volt-PF lowest PF " + std::to_string(mp.lowest_der_pf));
        require(mv.lowest_der_pf < 0.9, "volt-VAr lowest PF " + std::to_string(mv.lowest_der_pf));
        require(mp.total_der_q_abs_kvar < mv.total_der_q_abs_kvar,
                "volt-PF total |Q| " + std::to_string(mp.total_der_q_abs_kvar) +
                    " not below volt-VAr " + std::to_string(mv.total_der_q_abs_kvar));
        require(mp.total_loss_kw <= mv.total_loss_kw,
                "volt-PF losses " + std::to_string(mp.total_loss_kw) + " above volt-VAr " +
                    std::to_string(mv.total_loss_kw));
        const double elapsed = seconds_since(start);
        require(elapsed < 10.0, "took " + std::to_string(elapsed) + " s");
        std::ostringstream os;
        os << "baseline " << mb.violation_count << " violations; |Q| " << mp.total_der_q_abs_kvar
           << " vs " << mv.total_der_q_abs_kvar << " kvar; PF " << mp.lowest_der_pf << " vs "
           << mv.lowest_der_pf << "; " << elapsed << " s";
        return os.str();
    });

    runner.criterion(7, "dynamic consistency, step response and delay invariance", [] {
        Feeder f = make_two_bus_der_feeder();
        f.ders[0].mode = ControlMode::volt_pf();
        const double s_rated = f.ders[0].s_rated_kva;

        auto configure = [&](double tau, double delay, std::size_t steps) {
            ScenarioConfig config;
            config.feeder = f;
            config.profiles = frozen_profiles(f, 300.0, steps);
            config.spline_to_minutes = false;
            config.dynamics.tau_s = tau;
            config.dynamics.agent_delay_s = delay;
            config.dynamics.agent_period_s = 1.0;
            config.dynamics.dt_s = 1.0;
            return config;
        };

        const auto st = solve_static_with_control(f, load_injections(f), {300.0},
                                                  ControlMode::volt_pf(), preset_ieee1547_default());
        require(st.converged, "static reference did not converge");

        const ScenarioResult ideal = run_timeseries(configure(0.0, 0.0, 60));
        const auto& ideal_last = ideal.steps.back().der_records[0];
        require(std::abs(ideal_last.q_kvar - st.setpoints[0].q_kvar) < 1e-6 * s_rated,
                "tau=0 steady-state Q differs from the static solve");
        require(std::abs(ideal_last.v_pu - st.setpoints[0].v_pu) < 1e-6,
                "tau=0 steady-state V differs from the static solve");

        const ScenarioResult filtered = run_timeseries(configure(5.0, 0.0, 60));
        const double q_fix = filtered.steps.back().der_records[0].q_kvar;
        require(std::abs(q_fix) > 1.0, "case demands no Q");
        const double q_5tau = filtered.steps[25].der_records[0].q_kvar;
        require(std::abs(q_5tau - q_fix) <= 0.01 * std::abs(q_fix),
                "Q at 5*tau is " + std::to_string(q_5tau) + " vs fixed point " +
                    std::to_string(q_fix));

        const ScenarioResult delayed = run_timeseries(configure(5.0, 1.0, 200));
        const ScenarioResult undelayed = run_timeseries(configure(5.0, 0.0, 200));
        const auto& a = undelayed.steps.back().der_records[0];
        const auto& b = delayed.steps.back().der_records[0];
        require(std::abs(a.q_kvar - b.q_kvar) < 1e-6 * s_rated,
                "1 s delay changes steady-state Q");
        require(std::abs(a.v_pu - b.v_pu) < 1e-6, "1 s delay changes steady-state V");
        return std::string();
    });

    runner.criterion(8, "1440-step interpolated day run with series output", [&work] {
        const auto start = Clock::now();
        const SyntheticFeeder synth = generate_synthetic_feeder(study_params());

        std::vector<std::pair<std::string, ScenarioResult>> results;
        for (const auto& mode : {ControlMode::volt_var(), ControlMode::volt_pf()}) {
            ScenarioConfig config;
            config.feeder = synth.feeder;
            config.profiles = synth.profiles;  // 24 hourly points
            config.mode_override = mode;
            config.settings_override = preset_ieee1547_default();
            config.spline_to_minutes = true;
            ScenarioResult result = run_timeseries(config);
            require(result.steps.size() == 1440,
                    "expected 1440 steps, got " + std::to_string(result.steps.size()));
            for (const auto& step : result.steps) {
                require(step.converged,
                        "step " + std::to_string(step.step_index) + " did not converge");
            }
            results.emplace_back(mode.label(), std::move(result));
        }

        const ModeComparison cmp = compare_modes(results, synth.feeder);
        require(cmp.total_q_abs_series_kvar.size() == 2, "missing per-mode Q series");
        const std::string csv = render_total_q_series_csv(cmp);
        const fs::path csv_path = work / "total_q_series.csv";
        std::ofstream(csv_path, std::ios::binary) << csv;
        const std::size_t lines = static_cast<std::size_t>(
            std::count(csv.begin(), csv.end(), '\n'));
        require(lines == 2 * 1440 + 1, "series CSV has " + std::to_string(lines) + " lines");

        const double elapsed = seconds_since(start);
        require(elapsed < 60.0, "took " + std::to_string(elapsed) + " s");
        std::ostringstream os;
        os << "2 modes x 1440 steps in " << elapsed << " s";
        return os.str();
    });

    runner.criterion(9, "manifest re-runs and seeded generation are byte-identical", [&work] {
#ifndef FEEDERSIM_CLI_PATH
        throw CheckFailure{"CLI binary path not configured"};
#else
        const fs::path gen_a = work / "gen_a";
        const fs::path gen_b = work / "gen_b";
        require(run_cli("gen-feeder --buses 60 --penetration 200 --seed 42 --out " + gen_a.string(),
                        work / "gen_a.log") == 0,
                "gen-feeder (a) failed");
        require(run_cli("gen-feeder --buses 60 --penetration 200 --seed 42 --out " + gen_b.string(),
                        work / "gen_b.log") == 0,
                "gen-feeder (b) failed");
        require(read_file(gen_a / "feeder.json") == read_file(gen_b / "feeder.json"),
                "seeded feeder files differ");
        require(read_file(gen_a / "profiles.csv") == read_file(gen_b / "profiles.csv"),
                "seeded profile files differ");

        const fs::path cmp_a = work / "cmp_a";
        require(run_cli("compare --modes voltvar,voltpf --preset ieee1547 --static-hour 13"
                        " --feeder " + (gen_a / "feeder.json").string() +
                        " --profiles " + (gen_a / "profiles.csv").string() +
                        " --out " + cmp_a.string(),
                        work / "cmp_a.log") == 0,
                "compare run failed");
        const std::string table = read_file(cmp_a / "compare.csv");
        require(table.find("max_voltage_pu") != std::string::npos &&
                    table.find("total_der_q_abs_mvar") != std::string::npos &&
                    table.find("volt_pf") != std::string::npos,
                "comparison table is not shaped as expected");

        const fs::path cmp_b = work / "cmp_b";
        require(run_cli("compare --from-manifest " + (cmp_a / "manifest.json").string() +
                        " --out " + cmp_b.string(),
                        work / "cmp_b.log") == 0,
                "manifest re-run failed");
        for (const auto& name : {"manifest.json", "compare.csv", "compare.txt",
                                 "result_volt_var.csv", "result_volt_pf.csv",
                                 "summary_volt_var.json", "summary_volt_pf.json"}) {
            require(read_file(cmp_a / name) == read_file(cmp_b / name),
                    std::string(name) + " differs after manifest re-run");
        }

        require(run_cli("run --definitely-not-a-flag", work / "usage.log") == 2,
                "unknown flag should exit 2");
        return std::string("gen-feeder x2, compare + re-run, usage error");
#endif
    });

    std::cout << (runner.failures() == 0 ? "ALL CRITERIA PASSED"
                                         : std::to_string(runner.failures()) + " CRITERIA FAILED")
              << "\n";
    return runner.failures();
}
