#include <benchmark/benchmark.h>

#include "feedersim/ingest_io.hpp"
#include "feedersim/sim_engine.hpp"

using namespace feedersim;

namespace {

SyntheticFeeder make_case(std::size_t buses) {
    SyntheticFeederParams params;
    params.bus_count = buses;
    params.load_count = buses * 3 / 5;
    params.der_count = buses / 3;
    params.seed = 42;
    return generate_synthetic_feeder(params);
}

InjectionSet midday_injections(const SyntheticFeeder& synth, int hour) {
    InjectionSet inj;
    const double base_kva = synth.feeder.base_mva * 1000.0;
    for (std::size_t i = 0; i < synth.feeder.loads.size(); ++i) {
        inj[synth.feeder.loads[i].bus] +=
            Complex{-synth.profiles.load_p_kw[i][hour], -synth.profiles.load_q_kvar[i][hour]} /
            base_kva;
    }
    return inj;
}

void SolveRadial(benchmark::State& state) {
    const auto synth = make_case(static_cast<std::size_t>(state.range(0)));
    const Feeder normalized = per_unit_normalize(synth.feeder);
    const InjectionSet inj = midday_injections(synth, 13);
    for (auto _ : state) {
        auto sol = solve_radial(normalized, inj);
        benchmark::DoNotOptimize(sol.total_loss_kw);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(SolveRadial)->RangeMultiplier(2)->Range(32, 512)->Complexity();

void StaticControl(benchmark::State& state) {
    const auto synth = make_case(static_cast<std::size_t>(state.range(0)));
    const InjectionSet inj = midday_injections(synth, 13);
    std::vector<double> der_p;
    for (std::size_t i = 0; i < synth.feeder.ders.size(); ++i) {
        der_p.push_back(synth.profiles.der_p_kw[i][13]);
    }
    for (auto _ : state) {
        auto result = solve_static_with_control(synth.feeder, inj, der_p, ControlMode::volt_pf(),
                                                preset_ieee1547_default());
        benchmark::DoNotOptimize(result.control_iterations);
    }
}
BENCHMARK(StaticControl)->Arg(60)->Arg(120);

void CurveVoltPf(benchmark::State& state) {
    const CurveSettings settings = preset_ieee1547_default();
    double v = 0.85;
    for (auto _ : state) {
        benchmark::DoNotOptimize(voltpf_q(v, 7.5, settings).q_kvar);
        v += 1e-4;
        if (v > 1.15) v = 0.85;
    }
}
BENCHMARK(CurveVoltPf);

void DayRun(benchmark::State& state) {
    const auto synth = make_case(60);
    ScenarioConfig config;
    config.feeder = synth.feeder;
    config.profiles = synth.profiles;
    config.mode_override = ControlMode::volt_pf();
    config.settings_override = preset_ieee1547_default();
    for (auto _ : state) {
        auto result = run_timeseries(config);
        benchmark::DoNotOptimize(result.steps.size());
    }
}
BENCHMARK(DayRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
