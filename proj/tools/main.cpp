// feedersim command line frontend: run / compare / sweep / gen-feeder /
// validate. Every run writes a manifest.json with the fully resolved
// options; re-running from a manifest reproduces the outputs byte for byte.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "feedersim/ingest_io.hpp"
#include "feedersim/metrics_report.hpp"
#include "feedersim/sim_engine.hpp"
#include "feedersim/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace feedersim;

namespace {

constexpr int k_exit_ok = 0;
constexpr int k_exit_failure = 1;
constexpr int k_exit_usage = 2;

bool g_json_logs = false;

void log_line(const std::string& level, const std::string& message) {
    if (g_json_logs) {
        ordered_json j{{"level", level}, {"msg", message}};
        std::cerr << j.dump() << "\n";
    } else {
        std::cerr << level << ": " << message << "\n";
    }
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

fs::path default_out_dir() {
    if (const char* env = std::getenv("FEEDERSIM_OUT")) return env;
    return "out";
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const ordered_json& options) {
    ordered_json manifest;
    manifest["artifact_version"] = k_version;
    manifest["subcommand"] = subcommand;
    manifest["options"] = options;
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string sanitize_label(const std::string& label) {
    std::string out = label;
    for (char& c : out) {
        if (c == ':' || c == '/' || c == '\\' || c == '.') c = '_';
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : text) {
        if (c == sep) {
            parts.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) parts.push_back(current);
    return parts;
}

std::optional<CurveSettings> resolve_preset(const std::string& preset) {
    if (preset.empty()) return std::nullopt;
    if (preset == "ieee1547") return preset_ieee1547_default();
    if (preset.rfind("file:", 0) == 0) return load_curve_settings(preset.substr(5));
    throw std::invalid_argument("--preset must be 'ieee1547' or 'file:<path>', got '" + preset + "'");
}

// --- Scenario options shared by run / compare / sweep ---------------------

struct ScenarioFlags {
    std::string feeder_path;
    std::string profiles_path;
    std::string preset = "ieee1547";
    std::string mode;           // run/sweep
    std::string modes;          // compare
    std::int64_t static_hour = -1;
    bool timeseries = false;
    std::string steps;          // "first:last"
    double lambda = 0.5;
    double tau = 5.0;
    double agent_delay = 1.0;
    double agent_period = 1.0;
    double dt = 1.0;
    bool no_spline = false;
    std::uint64_t seed = 42;
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& flags, bool with_modes) {
    cmd->add_option("--feeder", flags.feeder_path, "Feeder JSON file");
    cmd->add_option("--profiles", flags.profiles_path, "Profile CSV file");
    cmd->add_option("--preset", flags.preset,
                    "Curve settings: 'ieee1547' or 'file:<path>' (default ieee1547)");
    if (with_modes) {
        cmd->add_option("--modes", flags.modes, "Comma-separated control modes to compare");
    } else {
        cmd->add_option("--mode", flags.mode, "Control mode for every DER");
    }
    cmd->add_option("--static-hour", flags.static_hour, "Snapshot hour index into the profiles");
    cmd->add_flag("--timeseries", flags.timeseries, "Run the full time series");
    cmd->add_option("--steps", flags.steps, "Time-series step range first:last (inclusive)");
    cmd->add_option("--lambda", flags.lambda, "Control-iteration damping factor");
    cmd->add_option("--tau", flags.tau, "Inverter response time constant, seconds");
    cmd->add_option("--agent-delay", flags.agent_delay, "Supervisory command delay, seconds");
    cmd->add_option("--agent-period", flags.agent_period, "Supervisory update period, seconds");
    cmd->add_option("--dt", flags.dt, "Simulated seconds per profile step");
    cmd->add_flag("--no-spline", flags.no_spline, "Do not spline hourly profiles to minutes");
    cmd->add_option("--seed", flags.seed, "Seed for generation-backed runs");
}

ordered_json scenario_options_json(const ScenarioFlags& flags, bool with_modes) {
    ordered_json j;
    j["feeder"] = flags.feeder_path;
    j["profiles"] = flags.profiles_path;
    j["preset"] = flags.preset;
    if (with_modes) {
        j["modes"] = flags.modes;
    } else {
        j["mode"] = flags.mode;
    }
    j["static_hour"] = flags.static_hour;
    j["timeseries"] = flags.timeseries;
    j["steps"] = flags.steps;
    j["lambda"] = flags.lambda;
    j["tau"] = flags.tau;
    j["agent_delay"] = flags.agent_delay;
    j["agent_period"] = flags.agent_period;
    j["dt"] = flags.dt;
    j["no_spline"] = flags.no_spline;
    j["seed"] = flags.seed;
    return j;
}

ScenarioFlags scenario_flags_from_json(const ordered_json& j, bool with_modes) {
    ScenarioFlags flags;
    flags.feeder_path = j.at("feeder").get<std::string>();
    flags.profiles_path = j.at("profiles").get<std::string>();
    flags.preset = j.at("preset").get<std::string>();
    if (with_modes) {
        flags.modes = j.at("modes").get<std::string>();
    } else {
        flags.mode = j.at("mode").get<std::string>();
    }
    flags.static_hour = j.at("static_hour").get<std::int64_t>();
    flags.timeseries = j.at("timeseries").get<bool>();
    flags.steps = j.at("steps").get<std::string>();
    flags.lambda = j.at("lambda").get<double>();
    flags.tau = j.at("tau").get<double>();
    flags.agent_delay = j.at("agent_delay").get<double>();
    flags.agent_period = j.at("agent_period").get<double>();
    flags.dt = j.at("dt").get<double>();
    flags.no_spline = j.at("no_spline").get<bool>();
    flags.seed = j.at("seed").get<std::uint64_t>();
    return flags;
}

ScenarioConfig build_scenario(const ScenarioFlags& flags) {
    if (flags.feeder_path.empty()) {
        throw std::invalid_argument("--feeder is required");
    }
    ScenarioConfig config;
    config.feeder = load_feeder(flags.feeder_path);
    if (!flags.profiles_path.empty()) config.profiles = load_profiles(flags.profiles_path);
    config.settings_override = resolve_preset(flags.preset);
    if (!flags.mode.empty()) config.mode_override = parse_control_mode(flags.mode);
    if (!flags.timeseries) {
        config.static_hour = flags.static_hour >= 0 ? static_cast<std::size_t>(flags.static_hour)
                                                    : 0;
    }
    if (!flags.steps.empty()) {
        const auto parts = split_list(flags.steps, ':');
        if (parts.size() != 2) throw std::invalid_argument("--steps must be first:last");
        config.step_range = {std::stoul(parts[0]), std::stoul(parts[1])};
    }
    config.spline_to_minutes = !flags.no_spline;
    config.control.lambda = flags.lambda;
    config.dynamics.tau_s = flags.tau;
    config.dynamics.agent_delay_s = flags.agent_delay;
    config.dynamics.agent_period_s = flags.agent_period;
    config.dynamics.dt_s = flags.dt;
    return config;
}

int check_result_converged(const ScenarioResult& result) {
    for (const auto& step : result.steps) {
        if (!step.converged) {
            log_line("error", "step " + std::to_string(step.step_index) + " did not converge");
            for (const auto& d : result.diagnostics) log_line("error", d);
            return k_exit_failure;
        }
    }
    return k_exit_ok;
}

// --- Subcommand bodies ----------------------------------------------------

int execute_run(const ordered_json& options, const fs::path& out_dir) {
    const ScenarioFlags flags = scenario_flags_from_json(options, false);
    ScenarioConfig config = build_scenario(flags);
    write_manifest(out_dir, "run", options);

    const ScenarioResult result = run_scenario(config);
    write_result(result, config.feeder, out_dir / "result.csv", ResultFormat::csv);
    write_result(result, config.feeder, out_dir / "summary.json", ResultFormat::json_summary);
    log_line("info", "wrote " + (out_dir / "result.csv").string());
    return check_result_converged(result);
}

int execute_compare(const ordered_json& options, const fs::path& out_dir) {
    const ScenarioFlags flags = scenario_flags_from_json(options, true);
    if (flags.modes.empty()) throw std::invalid_argument("--modes is required for compare");
    ScenarioConfig config = build_scenario(flags);
    write_manifest(out_dir, "compare", options);

    std::vector<std::pair<std::string, ScenarioResult>> results;
    int status = k_exit_ok;
    for (const auto& mode_text : split_list(flags.modes, ',')) {
        const ControlMode mode = parse_control_mode(mode_text);
        ScenarioConfig mode_config = config;
        mode_config.mode_override = mode;
        ScenarioResult result = run_scenario(mode_config);
        result.mode_label = mode.label();
        status = std::max(status, check_result_converged(result));
        const std::string tag = sanitize_label(mode.label());
        write_result(result, config.feeder, out_dir / ("result_" + tag + ".csv"), ResultFormat::csv);
        write_result(result, config.feeder, out_dir / ("summary_" + tag + ".json"),
                     ResultFormat::json_summary);
        results.emplace_back(mode.label(), std::move(result));
    }

    const ModeComparison cmp = compare_modes(results, config.feeder);
    write_text_file(out_dir / "compare.csv", render_comparison_csv(cmp));
    write_text_file(out_dir / "compare.txt", render_comparison_text(cmp));
    if (!cmp.total_q_abs_series_kvar.empty()) {
        write_text_file(out_dir / "total_q_series.csv", render_total_q_series_csv(cmp));
    }
    if (!config.feeder.transformers.empty()) {
        write_text_file(out_dir / "transformer_delta.csv", render_transformer_delta_csv(cmp));
    }
    if (config.settings_override) {
        write_text_file(out_dir / "curve_surface.csv",
                        render_curve_surface_csv(*config.settings_override, 10.0,
                                                 der_max_rated_p_kw(10.0)));
    }
    std::cout << render_comparison_text(cmp);
    return status;
}

int execute_sweep(const ordered_json& options, const fs::path& out_dir) {
    const ScenarioFlags flags = scenario_flags_from_json(options, false);
    const std::string param = options.at("param").get<std::string>();
    const std::string values_text = options.at("values").get<std::string>();
    if (param.empty() || values_text.empty()) {
        throw std::invalid_argument("sweep requires --param and --values");
    }
    write_manifest(out_dir, "sweep", options);

    std::ostringstream summary;
    summary << "param,value,converged,violation_count,lowest_der_pf,total_der_q_abs_kvar,"
               "total_loss_kw,max_v_pu\n";

    int status = k_exit_ok;
    for (const auto& value_text : split_list(values_text, ',')) {
        const double value = std::stod(value_text);
        ScenarioConfig config;
        if (param == "penetration") {
            SyntheticFeederParams gen;
            gen.seed = flags.seed;
            gen.penetration_percent = value;
            const SyntheticFeeder synth = generate_synthetic_feeder(gen);
            config.feeder = synth.feeder;
            config.profiles = synth.profiles;
            config.settings_override = resolve_preset(flags.preset);
            if (!flags.mode.empty()) config.mode_override = parse_control_mode(flags.mode);
            if (!flags.timeseries) {
                config.static_hour = flags.static_hour >= 0
                                         ? static_cast<std::size_t>(flags.static_hour)
                                         : 13;
            }
            config.spline_to_minutes = !flags.no_spline;
            config.control.lambda = flags.lambda;
            config.dynamics.tau_s = flags.tau;
            config.dynamics.agent_delay_s = flags.agent_delay;
            config.dynamics.agent_period_s = flags.agent_period;
            config.dynamics.dt_s = flags.dt;
        } else {
            config = build_scenario(flags);
            CurveSettings settings =
                config.settings_override ? *config.settings_override : preset_ieee1547_default();
            if (param == "v1") settings.v1 = value;
            else if (param == "v2") settings.v2 = value;
            else if (param == "v4") settings.v4 = value;
            else if (param == "v5") settings.v5 = value;
            else if (param == "pf_lim_inject") settings.pf_lim_inject = value;
            else if (param == "pf_lim_absorb") settings.pf_lim_absorb = value;
            else if (param == "q_lim_inject_pu") settings.q_lim_inject_pu = value;
            else if (param == "q_lim_absorb_pu") settings.q_lim_absorb_pu = value;
            else if (param == "lambda") config.control.lambda = value;
            else if (param == "tau") config.dynamics.tau_s = value;
            else throw std::invalid_argument("unknown sweep parameter '" + param + "'");
            settings.validate();
            config.settings_override = settings;
        }

        const fs::path sub = out_dir / (param + "_" + sanitize_label(value_text));
        fs::create_directories(sub);
        const ScenarioResult result = run_scenario(config);
        status = std::max(status, check_result_converged(result));
        write_result(result, config.feeder, sub / "result.csv", ResultFormat::csv);
        write_result(result, config.feeder, sub / "summary.json", ResultFormat::json_summary);

        const ModeMetrics metrics = compute_mode_metrics(result, config.feeder);
        bool converged = true;
        for (const auto& step : result.steps) converged = converged && step.converged;
        summary << param << "," << value_text << "," << (converged ? 1 : 0) << ","
                << metrics.violation_count << "," << metrics.lowest_der_pf << ","
                << metrics.total_der_q_abs_kvar << "," << metrics.total_loss_kw << ","
                << metrics.max_v_pu << "\n";
    }
    write_text_file(out_dir / "sweep_summary.csv", summary.str());
    return status;
}

int execute_gen_feeder(const ordered_json& options, const fs::path& out_dir) {
    SyntheticFeederParams params;
    params.bus_count = options.at("buses").get<std::size_t>();
    params.branching_factor = options.at("branching").get<int>();
    params.load_count = options.at("loads").get<std::size_t>();
    params.der_count = options.at("ders").get<std::size_t>();
    params.penetration_percent = options.at("penetration").get<double>();
    params.availability_min = options.at("avail_min").get<double>();
    params.availability_max = options.at("avail_max").get<double>();
    params.transformer_density = options.at("xfmr_density").get<double>();
    params.source_v_pu = options.at("source_v").get<double>();
    params.seed = options.at("seed").get<std::uint64_t>();
    if (options.contains("line_r_min")) {
        params.line_r_min_pu = options.at("line_r_min").get<double>();
        params.line_r_max_pu = options.at("line_r_max").get<double>();
        params.line_x_min_pu = options.at("line_x_min").get<double>();
        params.line_x_max_pu = options.at("line_x_max").get<double>();
    }
    write_manifest(out_dir, "gen-feeder", options);

    const SyntheticFeeder synth = generate_synthetic_feeder(params);
    save_feeder(synth.feeder, out_dir / "feeder.json");
    save_profiles(synth.profiles, out_dir / "profiles.csv");
    log_line("info", "wrote " + (out_dir / "feeder.json").string() + " (" +
                         std::to_string(synth.feeder.buses.size()) + " buses, " +
                         std::to_string(synth.feeder.ders.size()) + " DERs)");
    return k_exit_ok;
}

int execute_validate(const ordered_json& options, const fs::path& out_dir) {
    const std::string feeder_path = options.at("feeder").get<std::string>();
    const std::string profiles_path = options.at("profiles").get<std::string>();
    write_manifest(out_dir, "validate", options);

    int status = k_exit_ok;
    try {
        const Feeder feeder = load_feeder(feeder_path);
        std::cout << "feeder '" << feeder_path << "': ok (" << feeder.buses.size() << " buses, "
                  << feeder.lines.size() << " lines, " << feeder.transformers.size()
                  << " transformers, " << feeder.loads.size() << " loads, " << feeder.ders.size()
                  << " DERs)\n";
        if (!profiles_path.empty()) {
            const TimeSeriesProfiles profiles = load_profiles(profiles_path);
            std::cout << "profiles '" << profiles_path << "': ok (" << profiles.step_count()
                      << " steps, " << profiles.load_ids.size() << " loads, "
                      << profiles.der_ids.size() << " DERs)\n";
            // Binding check runs through a scenario assembly.
            ScenarioConfig config;
            config.feeder = feeder;
            config.profiles = profiles;
            config.static_hour = 0;
            run_static(config);
            std::cout << "binding: ok\n";
        }
    } catch (const std::exception& e) {
        std::cout << e.what() << "\n";
        status = k_exit_failure;
    }
    return status;
}

int execute(const std::string& subcommand, const ordered_json& options, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    if (subcommand == "run") return execute_run(options, out_dir);
    if (subcommand == "compare") return execute_compare(options, out_dir);
    if (subcommand == "sweep") return execute_sweep(options, out_dir);
    if (subcommand == "gen-feeder") return execute_gen_feeder(options, out_dir);
    if (subcommand == "validate") return execute_validate(options, out_dir);
    throw std::invalid_argument("unknown subcommand '" + subcommand + "' in manifest");
}

int rerun_from_manifest(const fs::path& manifest_path, const std::string& expected_subcommand,
                        const fs::path& out_dir) {
    std::ifstream in(manifest_path);
    if (!in) throw std::invalid_argument("cannot open manifest '" + manifest_path.string() + "'");
    ordered_json manifest = ordered_json::parse(in);
    const std::string subcommand = manifest.at("subcommand").get<std::string>();
    if (!expected_subcommand.empty() && subcommand != expected_subcommand) {
        throw std::invalid_argument("manifest was recorded for subcommand '" + subcommand + "'");
    }
    return execute(subcommand, manifest.at("options"), out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"feedersim: radial feeder simulator for DER voltage-regulation studies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", k_version);

    std::string out_dir_text = default_out_dir().string();
    std::string manifest_path;

    ScenarioFlags run_flags, compare_flags, sweep_flags;
    std::string sweep_param, sweep_values;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_dir_text, "Output directory (env FEEDERSIM_OUT)");
        cmd->add_flag("--json-logs", g_json_logs, "Line-delimited JSON diagnostics");
        cmd->add_option("--from-manifest", manifest_path, "Re-run from a recorded manifest");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "Run a single scenario");
    add_common(run_cmd);
    add_scenario_flags(run_cmd, run_flags, false);

    CLI::App* compare_cmd = app.add_subcommand("compare", "Run several control modes side by side");
    add_common(compare_cmd);
    add_scenario_flags(compare_cmd, compare_flags, true);

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Sweep a curve setting or the penetration");
    add_common(sweep_cmd);
    add_scenario_flags(sweep_cmd, sweep_flags, false);
    sweep_cmd->add_option("--param", sweep_param, "Swept parameter name");
    sweep_cmd->add_option("--values", sweep_values, "Comma-separated values");

    CLI::App* gen_cmd = app.add_subcommand("gen-feeder", "Generate a synthetic feeder + profiles");
    add_common(gen_cmd);
    SyntheticFeederParams gen_defaults;
    std::size_t gen_buses = gen_defaults.bus_count;
    int gen_branching = gen_defaults.branching_factor;
    std::size_t gen_loads = gen_defaults.load_count;
    std::size_t gen_ders = gen_defaults.der_count;
    double gen_penetration = gen_defaults.penetration_percent;
    double gen_avail_min = gen_defaults.availability_min;
    double gen_avail_max = gen_defaults.availability_max;
    double gen_density = gen_defaults.transformer_density;
    double gen_source_v = gen_defaults.source_v_pu;
    std::uint64_t gen_seed = gen_defaults.seed;
    gen_cmd->add_option("--buses", gen_buses, "Backbone bus count");
    gen_cmd->add_option("--branching", gen_branching, "Branching factor");
    gen_cmd->add_option("--loads", gen_loads, "Load count");
    gen_cmd->add_option("--ders", gen_ders, "DER count");
    gen_cmd->add_option("--penetration", gen_penetration, "DER rated P over peak load, percent");
    gen_cmd->add_option("--avail-min", gen_avail_min, "Min per-DER availability fraction");
    gen_cmd->add_option("--avail-max", gen_avail_max, "Max per-DER availability fraction");
    gen_cmd->add_option("--xfmr-density", gen_density, "Service transformer density");
    gen_cmd->add_option("--source-v", gen_source_v, "Substation voltage, p.u.");
    gen_cmd->add_option("--seed", gen_seed, "Random seed");
    double gen_r_min = gen_defaults.line_r_min_pu;
    double gen_r_max = gen_defaults.line_r_max_pu;
    double gen_x_min = gen_defaults.line_x_min_pu;
    double gen_x_max = gen_defaults.line_x_max_pu;
    gen_cmd->add_option("--line-r-min", gen_r_min, "Per-segment R lower bound, p.u.");
    gen_cmd->add_option("--line-r-max", gen_r_max, "Per-segment R upper bound, p.u.");
    gen_cmd->add_option("--line-x-min", gen_x_min, "Per-segment X lower bound, p.u.");
    gen_cmd->add_option("--line-x-max", gen_x_max, "Per-segment X upper bound, p.u.");

    CLI::App* validate_cmd = app.add_subcommand("validate", "Lint a feeder and optional profiles");
    add_common(validate_cmd);
    std::string validate_feeder, validate_profiles;
    validate_cmd->add_option("--feeder", validate_feeder, "Feeder JSON file");
    validate_cmd->add_option("--profiles", validate_profiles, "Profile CSV file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return k_exit_usage;
    }

    try {
        const fs::path out_dir = out_dir_text;
        if (!manifest_path.empty()) {
            std::string expected;
            if (run_cmd->parsed()) expected = "run";
            else if (compare_cmd->parsed()) expected = "compare";
            else if (sweep_cmd->parsed()) expected = "sweep";
            else if (gen_cmd->parsed()) expected = "gen-feeder";
            else if (validate_cmd->parsed()) expected = "validate";
            return rerun_from_manifest(manifest_path, expected, out_dir);
        }

        if (run_cmd->parsed()) {
            return execute("run", scenario_options_json(run_flags, false), out_dir);
        }
        if (compare_cmd->parsed()) {
            return execute("compare", scenario_options_json(compare_flags, true), out_dir);
        }
        if (sweep_cmd->parsed()) {
            ordered_json options = scenario_options_json(sweep_flags, false);
            options["param"] = sweep_param;
            options["values"] = sweep_values;
            return execute("sweep", options, out_dir);
        }
        if (gen_cmd->parsed()) {
            ordered_json options;
            options["buses"] = gen_buses;
            options["branching"] = gen_branching;
            options["loads"] = gen_loads;
            options["ders"] = gen_ders;
            options["penetration"] = gen_penetration;
            options["avail_min"] = gen_avail_min;
            options["avail_max"] = gen_avail_max;
            options["xfmr_density"] = gen_density;
            options["source_v"] = gen_source_v;
            options["seed"] = gen_seed;
            options["line_r_min"] = gen_r_min;
            options["line_r_max"] = gen_r_max;
            options["line_x_min"] = gen_x_min;
            options["line_x_max"] = gen_x_max;
            return execute("gen-feeder", options, out_dir);
        }
        if (validate_cmd->parsed()) {
            ordered_json options;
            options["feeder"] = validate_feeder;
            options["profiles"] = validate_profiles;
            return execute("validate", options, out_dir);
        }
    } catch (const SimulationAbort& e) {
        log_line("error", e.what());
        return k_exit_failure;
    } catch (const ParseError& e) {
        log_line("error", e.what());
        return k_exit_failure;
    } catch (const std::invalid_argument& e) {
        log_line("error", e.what());
        return k_exit_usage;
    } catch (const std::exception& e) {
        log_line("error", e.what());
        return k_exit_failure;
    }
    return k_exit_usage;
}
