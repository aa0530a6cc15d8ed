#include "feedersim/metrics_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "internal_format.hpp"

namespace feedersim {

namespace {

// Step whose total |Q| is largest: the peak of the regulation effort.
std::size_t representative_step(const ScenarioResult& result) {
    std::size_t best = 0;
    double best_q = -1.0;
    for (std::size_t i = 0; i < result.steps.size(); ++i) {
        if (result.steps[i].total_der_q_abs_kvar > best_q) {
            best_q = result.steps[i].total_der_q_abs_kvar;
            best = i;
        }
    }
    return best;
}

std::string fixed(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

}  // namespace

ViolationStats violation_stats(const PowerFlowSolution& solution, const Feeder& feeder) {
    ViolationStats stats;
    stats.max_v_pu = -1.0;
    stats.min_v_pu = std::numeric_limits<double>::infinity();

    std::unordered_map<std::string_view, const Bus*> buses;
    for (const auto& bus : feeder.buses) buses.emplace(bus.id, &bus);

    for (std::size_t i = 0; i < solution.bus_ids.size(); ++i) {
        auto it = buses.find(solution.bus_ids[i]);
        if (it == buses.end()) {
            throw std::invalid_argument("violation_stats: solution bus '" + solution.bus_ids[i] +
                                        "' not in feeder");
        }
        const double v = std::abs(solution.v_pu[i]);
        stats.max_v_pu = std::max(stats.max_v_pu, v);
        stats.min_v_pu = std::min(stats.min_v_pu, v);
        const VoltageLimits& lim = it->second->v_limits;
        if (v > lim.max_pu || v < lim.min_pu) {
            ++stats.count;
            stats.violating_buses.push_back(solution.bus_ids[i]);
        }
    }
    return stats;
}

DerPfStats der_pf_stats(const std::vector<DerSetpoint>& setpoints) {
    DerPfStats stats;
    for (const auto& sp : setpoints) {
        const double magnitude = sp.p_kw == 0.0 ? 1.0 : achieved_pf(sp.p_kw, sp.q_kvar).magnitude();
        stats.per_der.emplace_back(sp.der_id, magnitude);
        if (sp.p_kw > 0.0) stats.lowest_pf = std::min(stats.lowest_pf, magnitude);
    }
    return stats;
}

std::pair<double, double> total_der_q(const std::vector<DerSetpoint>& setpoints) {
    double signed_sum = 0.0;
    double abs_sum = 0.0;
    for (const auto& sp : setpoints) {
        signed_sum += sp.q_kvar;
        abs_sum += std::abs(sp.q_kvar);
    }
    return {signed_sum, abs_sum};
}

ModeMetrics compute_mode_metrics(const ScenarioResult& result, const Feeder& feeder) {
    if (result.steps.empty()) throw std::invalid_argument("compute_mode_metrics: empty result");

    ModeMetrics m;
    m.max_v_pu = -1.0;
    m.min_v_pu = std::numeric_limits<double>::infinity();
    std::set<std::string> violating;
    for (const auto& step : result.steps) {
        m.max_v_pu = std::max(m.max_v_pu, step.max_v_pu);
        m.min_v_pu = std::min(m.min_v_pu, step.min_v_pu);
        m.violation_count += step.violating_buses;
        violating.insert(step.violating_bus_ids.begin(), step.violating_bus_ids.end());
        const DerPfStats pf = der_pf_stats(step.der_records);
        m.lowest_der_pf = std::min(m.lowest_der_pf, pf.lowest_pf);
    }
    m.violating_bus_count = static_cast<int>(violating.size());

    const StepRecord& rep = result.steps[representative_step(result)];
    m.total_der_q_kvar = rep.total_der_q_kvar;
    m.total_der_q_abs_kvar = rep.total_der_q_abs_kvar;
    m.feederhead_p_kw = rep.feederhead_p_kw;
    m.feederhead_q_kvar = rep.feederhead_q_kvar;
    m.total_loss_kw = rep.loss_kw;
    m.transformer_loading_percent = rep.transformer_loading_percent;
    (void)feeder;
    return m;
}

std::vector<double> transformer_loading_delta(const ScenarioResult& result_a,
                                              const ScenarioResult& result_b,
                                              const Feeder& feeder) {
    const ModeMetrics a = compute_mode_metrics(result_a, feeder);
    const ModeMetrics b = compute_mode_metrics(result_b, feeder);
    if (a.transformer_loading_percent.size() != b.transformer_loading_percent.size()) {
        throw std::invalid_argument("transformer_loading_delta: results are from different feeders");
    }
    std::vector<double> delta(a.transformer_loading_percent.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        delta[i] = b.transformer_loading_percent[i] - a.transformer_loading_percent[i];
    }
    return delta;
}

ModeComparison compare_modes(const std::vector<std::pair<std::string, ScenarioResult>>& results,
                             const Feeder& feeder) {
    if (results.empty()) throw std::invalid_argument("compare_modes: no results");

    ModeComparison cmp;
    bool all_series = true;
    for (const auto& [label, result] : results) {
        cmp.labels.push_back(label);
        cmp.metrics.push_back(compute_mode_metrics(result, feeder));
        if (result.is_static || result.steps.size() < 2) all_series = false;
    }

    const ModeMetrics& ref = cmp.metrics.front();
    for (const ModeMetrics& m : cmp.metrics) {
        const double q_ref = ref.total_der_q_abs_kvar;
        cmp.q_reduction_percent.push_back(
            q_ref == 0.0 ? 0.0 : 100.0 * (q_ref - m.total_der_q_abs_kvar) / q_ref);
        const double loss_ref = ref.total_loss_kw;
        cmp.loss_reduction_percent.push_back(
            loss_ref == 0.0 ? 0.0 : 100.0 * (loss_ref - m.total_loss_kw) / loss_ref);
        std::vector<double> delta(m.transformer_loading_percent.size());
        for (std::size_t i = 0; i < delta.size(); ++i) {
            delta[i] = m.transformer_loading_percent[i] - ref.transformer_loading_percent[i];
        }
        cmp.transformer_loading_delta_pp.push_back(std::move(delta));
    }

    if (all_series) {
        const std::size_t steps = results.front().second.steps.size();
        for (const auto& [label, result] : results) {
            if (result.steps.size() != steps) {
                all_series = false;
                break;
            }
        }
        if (all_series) {
            for (const auto& step : results.front().second.steps) cmp.series_t_s.push_back(step.t_s);
            for (const auto& [label, result] : results) {
                std::vector<double> series;
                series.reserve(steps);
                for (const auto& step : result.steps) series.push_back(step.total_der_q_abs_kvar);
                cmp.total_q_abs_series_kvar.push_back(std::move(series));
            }
        }
    }
    return cmp;
}

namespace {

struct Row {
    std::string name;
    std::vector<std::string> cells;
};

std::vector<Row> comparison_rows(const ModeComparison& c) {
    const std::size_t n = c.metrics.size();
    std::vector<Row> rows;
    auto add = [&rows, n](const std::string& name, auto getter) {
        Row row{name, {}};
        row.cells.reserve(n);
        for (std::size_t i = 0; i < n; ++i) row.cells.push_back(getter(i));
        rows.push_back(std::move(row));
    };

    add("max_voltage_pu", [&](std::size_t i) { return fixed(c.metrics[i].max_v_pu, 4); });
    add("min_voltage_pu", [&](std::size_t i) { return fixed(c.metrics[i].min_v_pu, 4); });
    add("voltage_violations", [&](std::size_t i) { return std::to_string(c.metrics[i].violation_count); });
    add("lowest_der_pf", [&](std::size_t i) { return fixed(c.metrics[i].lowest_der_pf, 3); });
    add("feederhead_p_mw", [&](std::size_t i) { return fixed(c.metrics[i].feederhead_p_kw / 1000.0, 5); });
    add("feederhead_q_mvar", [&](std::size_t i) { return fixed(c.metrics[i].feederhead_q_kvar / 1000.0, 5); });
    add("total_der_q_mvar", [&](std::size_t i) { return fixed(c.metrics[i].total_der_q_kvar / 1000.0, 5); });
    add("total_der_q_abs_mvar", [&](std::size_t i) { return fixed(c.metrics[i].total_der_q_abs_kvar / 1000.0, 5); });
    add("total_loss_kw", [&](std::size_t i) { return fixed(c.metrics[i].total_loss_kw, 3); });
    if (n > 1) {
        add("q_reduction_percent", [&](std::size_t i) { return fixed(c.q_reduction_percent[i], 2); });
        add("loss_reduction_percent", [&](std::size_t i) { return fixed(c.loss_reduction_percent[i], 2); });
    }
    return rows;
}

}  // namespace

std::string render_comparison_text(const ModeComparison& comparison) {
    const auto rows = comparison_rows(comparison);
    std::size_t name_width = std::string("parameter").size();
    for (const auto& row : rows) name_width = std::max(name_width, row.name.size());
    std::vector<std::size_t> widths(comparison.labels.size());
    for (std::size_t i = 0; i < comparison.labels.size(); ++i) {
        widths[i] = comparison.labels[i].size();
        for (const auto& row : rows) widths[i] = std::max(widths[i], row.cells[i].size());
    }

    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_width + 2)) << "parameter";
    for (std::size_t i = 0; i < comparison.labels.size(); ++i) {
        os << std::right << std::setw(static_cast<int>(widths[i] + 2)) << comparison.labels[i];
    }
    os << "\n";
    for (const auto& row : rows) {
        os << std::left << std::setw(static_cast<int>(name_width + 2)) << row.name;
        for (std::size_t i = 0; i < row.cells.size(); ++i) {
            os << std::right << std::setw(static_cast<int>(widths[i] + 2)) << row.cells[i];
        }
        os << "\n";
    }
    return os.str();
}

std::string render_comparison_csv(const ModeComparison& comparison) {
    std::ostringstream os;
    os << "parameter";
    for (const auto& label : comparison.labels) os << "," << label;
    os << "\n";
    for (const auto& row : comparison_rows(comparison)) {
        os << row.name;
        for (const auto& cell : row.cells) os << "," << cell;
        os << "\n";
    }
    return os.str();
}

std::string render_total_q_series_csv(const ModeComparison& comparison) {
    std::ostringstream os;
    os << "timestep,t_s,mode,total_der_q_abs_kvar\n";
    for (std::size_t m = 0; m < comparison.total_q_abs_series_kvar.size(); ++m) {
        const auto& series = comparison.total_q_abs_series_kvar[m];
        for (std::size_t k = 0; k < series.size(); ++k) {
            os << k << "," << detail::format_double(comparison.series_t_s[k]) << ","
               << comparison.labels[m] << "," << detail::format_double(series[k]) << "\n";
        }
    }
    return os.str();
}

std::string render_transformer_delta_csv(const ModeComparison& comparison) {
    std::ostringstream os;
    os << "transformer,mode,loading_percent,delta_pp\n";
    for (std::size_t m = 0; m < comparison.metrics.size(); ++m) {
        const auto& loading = comparison.metrics[m].transformer_loading_percent;
        for (std::size_t t = 0; t < loading.size(); ++t) {
            os << "xfmr_" << t << "," << comparison.labels[m] << ","
               << detail::format_double(loading[t]) << ","
               << detail::format_double(comparison.transformer_loading_delta_pp[m][t]) << "\n";
        }
    }
    return os.str();
}

std::string render_curve_surface_csv(const CurveSettings& settings, double s_rated_kva,
                                     double p_rated_kw) {
    settings.validate();
    std::ostringstream os;
    os << "v_pu,p_fraction,mode,q_kvar\n";
    for (int vi = 0; vi <= 120; ++vi) {
        const double v = 0.85 + 0.0025 * vi;
        const std::string vs = detail::format_double(v);
        os << vs << ",1,volt_var," << detail::format_double(voltvar_q(v, s_rated_kva, settings).q_kvar)
           << "\n";
        for (int pi = 0; pi <= 5; ++pi) {
            const double fraction = 0.2 * pi;
            const double p = fraction * p_rated_kw;
            os << vs << "," << detail::format_double(fraction) << ",volt_pf,"
               << detail::format_double(voltpf_q(v, p, settings).q_kvar) << "\n";
            os << vs << "," << detail::format_double(fraction) << ",volt_pf2,"
               << detail::format_double(voltpf2_q(v, p, p_rated_kw, s_rated_kva, settings).q_kvar)
               << "\n";
        }
    }
    return os.str();
}

}  // namespace feedersim
