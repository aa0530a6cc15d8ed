#include "feedersim/ingest_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "internal_format.hpp"

namespace feedersim {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

double require_number(const ordered_json& j, const std::string& key, const std::string& origin) {
    if (!j.contains(key)) throw ParseError(origin + ": missing required key '" + key + "'");
    if (!j[key].is_number()) throw ParseError(origin + ": key '" + key + "' must be a number");
    return j[key].get<double>();
}

std::string require_string(const ordered_json& j, const std::string& key, const std::string& origin) {
    if (!j.contains(key)) throw ParseError(origin + ": missing required key '" + key + "'");
    if (!j[key].is_string()) throw ParseError(origin + ": key '" + key + "' must be a string");
    return j[key].get<std::string>();
}

Complex parse_complex(const ordered_json& j, const std::string& origin) {
    return {require_number(j, "r", origin), require_number(j, "x", origin)};
}

ordered_json complex_to_json(const Complex& z) {
    return ordered_json{{"r", z.real()}, {"x", z.imag()}};
}

CurveSettings parse_settings_object(const ordered_json& j, const std::string& origin) {
    CurveSettings s;
    s.v1 = require_number(j, "v1", origin);
    s.v2 = require_number(j, "v2", origin);
    s.v4 = require_number(j, "v4", origin);
    s.v5 = require_number(j, "v5", origin);
    s.pf_lim_inject = require_number(j, "pf_lim_inject", origin);
    s.pf_lim_absorb = require_number(j, "pf_lim_absorb", origin);
    s.q_lim_inject_pu = require_number(j, "q_lim_inject_pu", origin);
    s.q_lim_absorb_pu = require_number(j, "q_lim_absorb_pu", origin);
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(origin + ": " + e.what());
    }
    return s;
}

ordered_json settings_to_json_object(const CurveSettings& s) {
    return ordered_json{
        {"v1", s.v1},
        {"v2", s.v2},
        {"v4", s.v4},
        {"v5", s.v5},
        {"pf_lim_inject", s.pf_lim_inject},
        {"pf_lim_absorb", s.pf_lim_absorb},
        {"q_lim_inject_pu", s.q_lim_inject_pu},
        {"q_lim_absorb_pu", s.q_lim_absorb_pu},
    };
}

ControlMode parse_mode_json(const ordered_json& j, const std::string& origin) {
    try {
        if (j.is_string()) return parse_control_mode(j.get<std::string>());
        if (j.is_object()) {
            if (j.contains("constant_pf")) {
                const auto& inner = j["constant_pf"];
                const double mag = require_number(inner, "magnitude", origin);
                const std::string exc = require_string(inner, "excitation", origin);
                if (exc == "inject") return ControlMode::constant_pf(SignedPF::inject(mag));
                if (exc == "absorb") return ControlMode::constant_pf(SignedPF::absorb(mag));
                if (exc == "unity") return ControlMode::constant_pf(SignedPF::unity());
                throw ParseError(origin + ": unknown excitation '" + exc + "'");
            }
            if (j.contains("constant_q")) {
                return ControlMode::constant_q(require_number(j["constant_q"], "q_set_pu", origin));
            }
        }
    } catch (const std::invalid_argument& e) {
        throw ParseError(origin + ": " + e.what());
    }
    throw ParseError(origin + ": unrecognized control mode value");
}

ordered_json mode_to_json(const ControlMode& mode) {
    switch (mode.kind) {
        case ControlKind::unity_pf: return "unity_pf";
        case ControlKind::volt_var: return "volt_var";
        case ControlKind::volt_pf: return "volt_pf";
        case ControlKind::volt_pf2: return "volt_pf2";
        case ControlKind::constant_pf:
            return ordered_json{{"constant_pf",
                                 ordered_json{{"magnitude", mode.pf.magnitude()},
                                              {"excitation", to_string(mode.pf.excitation())}}}};
        case ControlKind::constant_q:
            return ordered_json{{"constant_q", ordered_json{{"q_set_pu", mode.q_set_pu}}}};
    }
    return "unity_pf";
}

}  // namespace

Feeder parse_feeder_json(const std::string& text, const std::string& origin) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }

    Feeder f;
    f.base_mva = require_number(j, "base_mva", origin);
    f.source_bus = require_string(j, "source_bus", origin);
    f.source_v_pu = require_number(j, "source_v_pu", origin);
    f.normalized = j.value("normalized", false);

    auto require_array = [&](const std::string& key) -> const ordered_json& {
        if (!j.contains(key)) throw ParseError(origin + ": missing required key '" + key + "'");
        if (!j[key].is_array()) throw ParseError(origin + ": key '" + key + "' must be an array");
        return j[key];
    };

    std::size_t n = 0;
    for (const auto& jb : require_array("buses")) {
        const std::string where = origin + ": buses[" + std::to_string(n++) + "]";
        Bus bus;
        bus.id = require_string(jb, "id", where);
        bus.phase_count = static_cast<int>(jb.value("phase_count", 3));
        bus.nominal_kv = require_number(jb, "nominal_kv", where);
        if (jb.contains("v_limits")) {
            bus.v_limits.min_pu = require_number(jb["v_limits"], "min_pu", where);
            bus.v_limits.max_pu = require_number(jb["v_limits"], "max_pu", where);
        }
        f.buses.push_back(std::move(bus));
    }
    n = 0;
    for (const auto& jl : require_array("lines")) {
        const std::string where = origin + ": lines[" + std::to_string(n++) + "]";
        LineSegment line;
        line.from_bus = require_string(jl, "from_bus", where);
        line.to_bus = require_string(jl, "to_bus", where);
        if (!jl.contains("impedance")) throw ParseError(where + ": missing required key 'impedance'");
        line.impedance = parse_complex(jl["impedance"], where);
        f.lines.push_back(std::move(line));
    }
    n = 0;
    for (const auto& jt : require_array("transformers")) {
        const std::string where = origin + ": transformers[" + std::to_string(n++) + "]";
        TransformerBank tx;
        tx.from_bus = require_string(jt, "from_bus", where);
        tx.to_bus = require_string(jt, "to_bus", where);
        tx.rating_kva = require_number(jt, "rating_kva", where);
        if (!jt.contains("series_impedance")) {
            throw ParseError(where + ": missing required key 'series_impedance'");
        }
        tx.series_impedance = parse_complex(jt["series_impedance"], where);
        tx.tap_ratio = jt.value("tap_ratio", 1.0);
        f.transformers.push_back(std::move(tx));
    }
    n = 0;
    for (const auto& jl : require_array("loads")) {
        const std::string where = origin + ": loads[" + std::to_string(n) + "]";
        Load load;
        load.id = jl.value("id", "load" + std::to_string(n));
        load.bus = require_string(jl, "bus", where);
        load.p_kw = require_number(jl, "p_kw", where);
        load.q_kvar = require_number(jl, "q_kvar", where);
        f.loads.push_back(std::move(load));
        ++n;
    }
    n = 0;
    for (const auto& jd : require_array("ders")) {
        const std::string where = origin + ": ders[" + std::to_string(n) + "]";
        DerUnit der;
        der.id = jd.value("id", "der" + std::to_string(n));
        der.bus = require_string(jd, "bus", where);
        der.s_rated_kva = require_number(jd, "s_rated_kva", where);
        der.p_rated_kw = require_number(jd, "p_rated_kw", where);
        if (jd.contains("mode") && !jd["mode"].is_null()) der.mode = parse_mode_json(jd["mode"], where);
        if (jd.contains("settings") && !jd["settings"].is_null()) {
            der.settings = parse_settings_object(jd["settings"], where);
        }
        f.ders.push_back(std::move(der));
        ++n;
    }

    const ValidationReport report = validate_topology(f);
    if (!report.valid()) {
        throw ParseError(origin + ": invalid feeder:\n" + report.to_string());
    }
    return f;
}

Feeder load_feeder(const std::filesystem::path& path) {
    return parse_feeder_json(read_file(path), path.string());
}

std::string feeder_to_json(const Feeder& f) {
    ordered_json j;
    j["base_mva"] = f.base_mva;
    j["source_bus"] = f.source_bus;
    j["source_v_pu"] = f.source_v_pu;
    j["normalized"] = f.normalized;
    j["buses"] = ordered_json::array();
    for (const auto& bus : f.buses) {
        j["buses"].push_back(ordered_json{
            {"id", bus.id},
            {"phase_count", bus.phase_count},
            {"nominal_kv", bus.nominal_kv},
            {"v_limits", ordered_json{{"min_pu", bus.v_limits.min_pu}, {"max_pu", bus.v_limits.max_pu}}},
        });
    }
    j["lines"] = ordered_json::array();
    for (const auto& line : f.lines) {
        j["lines"].push_back(ordered_json{
            {"from_bus", line.from_bus},
            {"to_bus", line.to_bus},
            {"impedance", complex_to_json(line.impedance)},
        });
    }
    j["transformers"] = ordered_json::array();
    for (const auto& tx : f.transformers) {
        j["transformers"].push_back(ordered_json{
            {"from_bus", tx.from_bus},
            {"to_bus", tx.to_bus},
            {"rating_kva", tx.rating_kva},
            {"series_impedance", complex_to_json(tx.series_impedance)},
            {"tap_ratio", tx.tap_ratio},
        });
    }
    j["loads"] = ordered_json::array();
    for (const auto& load : f.loads) {
        j["loads"].push_back(ordered_json{
            {"id", load.id},
            {"bus", load.bus},
            {"p_kw", load.p_kw},
            {"q_kvar", load.q_kvar},
        });
    }
    j["ders"] = ordered_json::array();
    for (const auto& der : f.ders) {
        ordered_json jd{
            {"id", der.id},
            {"bus", der.bus},
            {"s_rated_kva", der.s_rated_kva},
            {"p_rated_kw", der.p_rated_kw},
            {"mode", mode_to_json(der.mode)},
        };
        jd["settings"] = der.settings ? settings_to_json_object(*der.settings) : ordered_json(nullptr);
        j["ders"].push_back(std::move(jd));
    }
    return j.dump(2) + "\n";
}

void save_feeder(const Feeder& feeder, const std::filesystem::path& path) {
    write_file(path, feeder_to_json(feeder));
}

CurveSettings load_curve_settings(const std::filesystem::path& path) {
    const std::string origin = path.string();
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (j.contains("curve_settings")) return parse_settings_object(j["curve_settings"], origin);
    return parse_settings_object(j, origin);
}

std::string curve_settings_to_json(const CurveSettings& settings) {
    ordered_json j;
    j["curve_settings"] = settings_to_json_object(settings);
    return j.dump(2) + "\n";
}

// --- Profiles ---------------------------------------------------------

namespace {

// Howard Hinnant's days-from-civil; avoids timezone/locale dependence.
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const int yoe = y - era * 400;
    const int doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + doe - 719468;
}

// Minutes (integer or decimal) or ISO-8601 (YYYY-MM-DDTHH:MM[:SS]);
// returns seconds.
double parse_timestamp(const std::string& text, const std::string& where) {
    bool numeric = !text.empty();
    bool saw_dot = false;
    for (char c : text) {
        if (c == '.' && !saw_dot) {
            saw_dot = true;
            continue;
        }
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            numeric = false;
            break;
        }
    }
    if (numeric) {
        double minutes = 0.0;
        std::from_chars(text.data(), text.data() + text.size(), minutes);
        return minutes * 60.0;
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const int fields = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s);
    if (fields < 5) {
        throw ParseError(where + ": timestamp '" + text +
                         "' is neither integer minutes nor ISO-8601");
    }
    return static_cast<double>(days_from_civil(y, mo, d)) * 86400.0 + h * 3600.0 + mi * 60.0 +
           (fields >= 6 ? s : 0);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    fields.push_back(current);
    for (auto& field : fields) {
        const auto begin = field.find_first_not_of(" \t\r");
        const auto end = field.find_last_not_of(" \t\r");
        field = begin == std::string::npos ? "" : field.substr(begin, end - begin + 1);
    }
    return fields;
}

}  // namespace

TimeSeriesProfiles load_profiles(const std::filesystem::path& path) {
    const std::string origin = path.string();
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + origin + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(origin + ": empty file");
    {
        auto header = split_csv_line(line);
        const std::vector<std::string> expected{"timestamp", "entity_id", "kind", "value"};
        if (header != expected) {
            throw ParseError(origin + ": header must be 'timestamp,entity_id,kind,value'");
        }
    }

    // kind -> entity -> timestamp -> value, all ordered for determinism.
    std::map<std::string, std::map<std::string, std::map<double, double>>> table;
    std::set<double> timestamps;
    std::size_t line_no = 1;
    std::vector<std::string> problems;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::string where = origin + ":" + std::to_string(line_no);
        auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw ParseError(where + ": expected 4 fields, found " + std::to_string(fields.size()));
        }
        const double ts = parse_timestamp(fields[0], where);
        const std::string& entity = fields[1];
        const std::string& kind = fields[2];
        if (kind != "load_p" && kind != "load_q" && kind != "der_p" && kind != "source_v") {
            throw ParseError(where + ": unknown kind '" + kind + "'");
        }
        double value = 0.0;
        const auto rc = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), value);
        if (rc.ec != std::errc{}) throw ParseError(where + ": bad value '" + fields[3] + "'");
        if (kind == "der_p" && value < 0.0) {
            problems.push_back("negative der_p for '" + entity + "' at " + fields[0]);
        }
        table[kind][entity][ts] = value;
        timestamps.insert(ts);
    }
    if (timestamps.empty()) throw ParseError(origin + ": no data rows");

    TimeSeriesProfiles profiles;
    profiles.timestamps_s.assign(timestamps.begin(), timestamps.end());

    auto series_for = [&](const std::string& kind, const std::string& entity) {
        std::vector<double> series;
        series.reserve(profiles.timestamps_s.size());
        const auto& by_ts = table[kind][entity];
        for (double ts : profiles.timestamps_s) {
            auto it = by_ts.find(ts);
            if (it == by_ts.end()) {
                problems.push_back(kind + " '" + entity + "' missing at timestamp " +
                                   detail::format_double(ts / 60.0));
                series.push_back(0.0);
            } else {
                series.push_back(it->second);
            }
        }
        return series;
    };

    std::set<std::string> load_ids;
    for (const auto& [entity, _] : table["load_p"]) load_ids.insert(entity);
    for (const auto& [entity, _] : table["load_q"]) load_ids.insert(entity);
    for (const auto& entity : load_ids) {
        profiles.load_ids.push_back(entity);
        profiles.load_p_kw.push_back(series_for("load_p", entity));
        profiles.load_q_kvar.push_back(series_for("load_q", entity));
    }
    for (const auto& [entity, _] : table["der_p"]) {
        profiles.der_ids.push_back(entity);
        profiles.der_p_kw.push_back(series_for("der_p", entity));
    }
    if (table.count("source_v")) {
        if (table["source_v"].size() != 1) {
            throw ParseError(origin + ": expected exactly one source_v entity");
        }
        profiles.source_v_pu = series_for("source_v", table["source_v"].begin()->first);
    }

    if (!problems.empty()) {
        std::ostringstream os;
        os << origin << ": profile validation failed:";
        for (const auto& p : problems) os << "\n  " << p;
        throw ParseError(os.str());
    }
    try {
        profiles.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(origin + ": " + e.what());
    }
    return profiles;
}

std::string profiles_to_csv(const TimeSeriesProfiles& profiles) {
    std::ostringstream os;
    os << "timestamp,entity_id,kind,value\n";
    for (std::size_t k = 0; k < profiles.step_count(); ++k) {
        const double minutes = profiles.timestamps_s[k] / 60.0;
        const std::string ts = minutes == std::floor(minutes)
                                   ? std::to_string(static_cast<long long>(minutes))
                                   : detail::format_double(minutes);
        for (std::size_t i = 0; i < profiles.load_ids.size(); ++i) {
            os << ts << "," << profiles.load_ids[i] << ",load_p,"
               << detail::format_double(profiles.load_p_kw[i][k]) << "\n";
            os << ts << "," << profiles.load_ids[i] << ",load_q,"
               << detail::format_double(profiles.load_q_kvar[i][k]) << "\n";
        }
        for (std::size_t i = 0; i < profiles.der_ids.size(); ++i) {
            os << ts << "," << profiles.der_ids[i] << ",der_p,"
               << detail::format_double(profiles.der_p_kw[i][k]) << "\n";
        }
        if (!profiles.source_v_pu.empty()) {
            os << ts << ",source,source_v," << detail::format_double(profiles.source_v_pu[k]) << "\n";
        }
    }
    return os.str();
}

void save_profiles(const TimeSeriesProfiles& profiles, const std::filesystem::path& path) {
    write_file(path, profiles_to_csv(profiles));
}

// --- Synthetic feeder generation ----------------------------------------

namespace {

// mt19937_64 raw draws with explicit mappings; libc distributions are not
// bit-stable across implementations.
class PortableRng {
public:
    explicit PortableRng(std::uint64_t seed) : engine_(seed) {}

    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        return lo + engine_() % (hi - lo + 1);
    }

private:
    std::mt19937_64 engine_;
};

// Solar bell, peak-normalized, zero outside daylight hours.
double solar_shape(int hour) {
    if (hour < 6 || hour > 19) return 0.0;
    const double h = static_cast<double>(hour);
    const double width = 2.0 * 2.8 * 2.8;
    return std::exp(-(h - 12.5) * (h - 12.5) / width) / std::exp(-0.25 / width);
}

// Double-peak residential stand-in: morning shoulder, midday valley near
// a third of the evening peak.
double load_shape(int hour) {
    const double h = static_cast<double>(hour);
    const double morning = 0.25 * std::exp(-(h - 7.5) * (h - 7.5) / (2.0 * 2.0 * 2.0));
    const double evening = 0.70 * std::exp(-(h - 19.0) * (h - 19.0) / (2.0 * 2.5 * 2.5));
    return 0.30 + morning + evening;
}

double standard_transformer_kva(double needed_kva) {
    for (double rating : {15.0, 25.0, 37.5, 50.0, 75.0, 100.0, 167.0, 250.0, 500.0}) {
        if (rating >= needed_kva) return rating;
    }
    return needed_kva;
}

}  // namespace

SyntheticFeeder generate_synthetic_feeder(const SyntheticFeederParams& params) {
    auto fail = [](const std::string& what) {
        throw std::invalid_argument("generate_synthetic_feeder: " + what);
    };
    if (params.bus_count < 2) fail("bus_count must be >= 2");
    if (params.branching_factor < 1) fail("branching_factor must be >= 1");
    if (params.der_count > params.bus_count - 1) fail("more DERs than buses");
    if (params.load_count < 1) fail("load_count must be >= 1");
    if (params.penetration_percent < 0.0) fail("penetration_percent must be >= 0");
    if (params.line_r_min_pu > params.line_r_max_pu || params.line_r_min_pu < 0.0) fail("bad line R range");
    if (params.line_x_min_pu > params.line_x_max_pu || params.line_x_min_pu < 0.0) fail("bad line X range");
    if (params.availability_min > params.availability_max || params.availability_min < 0.0 ||
        params.availability_max > 1.0) {
        fail("availability range must lie in [0, 1]");
    }
    if (!(params.base_mva > 0.0)) fail("base_mva must be positive");

    PortableRng rng(params.seed);
    const double mv_kv = 7.2;  // line-to-neutral of a 12.47 kV class feeder
    const double lv_kv = 0.24;
    const double z_base_mv = mv_kv * mv_kv / params.base_mva;  // ohms

    Feeder f;
    f.base_mva = params.base_mva;
    f.source_bus = "sub";
    f.source_v_pu = params.source_v_pu;

    const std::size_t n = params.bus_count;
    f.buses.push_back({"sub", 3, mv_kv, {}});
    std::vector<int> depth(n, 0);
    char name[32];
    for (std::size_t i = 1; i < n; ++i) {
        std::snprintf(name, sizeof(name), "b%03zu", i);
        f.buses.push_back({name, 3, mv_kv, {}});
        // Chain-biased attachment: parent drawn from the most recent buses.
        const std::uint64_t span = std::min<std::uint64_t>(i - 1, static_cast<std::uint64_t>(params.branching_factor));
        const std::size_t parent = i - 1 - rng.uniform_int(0, span);
        depth[i] = depth[parent] + 1;
        LineSegment line;
        line.from_bus = f.buses[parent].id;
        line.to_bus = f.buses[i].id;
        line.impedance = Complex{rng.uniform(params.line_r_min_pu, params.line_r_max_pu),
                                 rng.uniform(params.line_x_min_pu, params.line_x_max_pu)} *
                         z_base_mv;
        f.lines.push_back(std::move(line));
    }

    // Leaf-biased site selection; the exponent sets how hard placement
    // concentrates toward the feeder end.
    auto pick_weighted_bus = [&](double exponent) -> std::size_t {
        double total = 0.0;
        for (std::size_t i = 1; i < n; ++i) total += std::pow(depth[i], exponent);
        double r = rng.uniform01() * total;
        for (std::size_t i = 1; i < n; ++i) {
            r -= std::pow(depth[i], exponent);
            if (r <= 0.0) return i;
        }
        return n - 1;
    };

    const bool with_ders = params.der_count > 0 && params.penetration_percent > 0.0;

    for (std::size_t i = 0; i < params.load_count; ++i) {
        std::snprintf(name, sizeof(name), "l%03zu", i);
        Load load;
        load.id = name;
        load.bus = f.buses[pick_weighted_bus(2.0)].id;
        load.p_kw = rng.uniform(params.load_kw_min, params.load_kw_max);
        load.q_kvar = load.p_kw * 0.3286841052788639;  // tan(acos(0.95)), lagging
        f.loads.push_back(std::move(load));
    }

    std::vector<double> availability;
    if (with_ders) {
        std::set<std::size_t> taken;
        const double rating_classes[5] = {5.0, 8.0, 12.0, 15.0, 20.0};
        for (std::size_t i = 0; i < params.der_count; ++i) {
            std::size_t bus = pick_weighted_bus(4.0);
            while (taken.count(bus)) bus = 1 + (bus % (n - 1));  // deterministic probe
            taken.insert(bus);
            std::snprintf(name, sizeof(name), "d%03zu", i);
            DerUnit der;
            der.id = name;
            der.bus = f.buses[bus].id;
            der.p_rated_kw = rating_classes[rng.uniform_int(0, 4)];
            // Smallest 0.1 kVA step that keeps rated P feasible alongside
            // 0.44 S_rated of reactive support.
            const double s_min = der.p_rated_kw / std::sqrt(1.0 - 0.44 * 0.44);
            der.s_rated_kva = std::ceil(s_min * 10.0 - 1e-9) / 10.0;
            der.mode = ControlMode::unity_pf();
            // Orientation/shading/DC-ratio proxy: midday availability skews
            // toward the low end of the range (quadratic draw).
            const double u = rng.uniform01();
            availability.push_back(params.availability_min +
                                   (params.availability_max - params.availability_min) * u * u);
            f.ders.push_back(std::move(der));
        }

        // Scale the drawn loads so the requested penetration holds exactly:
        // penetration = sum(rated P) / sum(peak load) * 100.
        double rated_sum = 0.0;
        for (const auto& der : f.ders) rated_sum += der.p_rated_kw;
        double peak_sum = 0.0;
        for (const auto& load : f.loads) peak_sum += load.p_kw;
        const double target_peak = rated_sum * 100.0 / params.penetration_percent;
        const double scale = target_peak / peak_sum;
        for (auto& load : f.loads) {
            load.p_kw *= scale;
            load.q_kvar *= scale;
        }

        // Calibrate the aggregate midday output to the draw law's own mean
        // (min + range/3 for the quadratic draw); the per-DER spread keeps
        // its shape. This pins the study day's net-injection regime for
        // any seed.
        const double target_mean =
            params.availability_min + (params.availability_max - params.availability_min) / 3.0;
        for (int pass = 0; pass < 4; ++pass) {
            double produced = 0.0;
            for (std::size_t i = 0; i < availability.size(); ++i) {
                produced += availability[i] * f.ders[i].p_rated_kw;
            }
            if (produced <= 0.0) break;
            const double adjust = target_mean * rated_sum / produced;
            for (std::size_t i = 0; i < availability.size(); ++i) {
                availability[i] = std::clamp(availability[i] * adjust,
                                             params.availability_min, params.availability_max);
            }
        }
    }

    // Conductor tapering: each segment's drawn impedance is sized for a
    // lateral carrying line_design_kw; trunk segments serving more power
    // get proportionally heavier conductor. Light laterals are never scaled
    // up by more than 25 percent.
    {
        std::vector<double> served_load_kw(n, 0.0);
        std::vector<double> served_der_kw(n, 0.0);
        std::unordered_map<std::string, std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i) idx.emplace(f.buses[i].id, i);
        for (const auto& load : f.loads) served_load_kw[idx.at(load.bus)] += load.p_kw;
        for (const auto& der : f.ders) served_der_kw[idx.at(der.bus)] += der.p_rated_kw;
        // Line k feeds bus k+1; parents always precede children, so a
        // reverse pass accumulates the downstream totals.
        for (std::size_t i = n - 1; i >= 1; --i) {
            const std::size_t parent = idx.at(f.lines[i - 1].from_bus);
            served_load_kw[parent] += served_load_kw[i];
            served_der_kw[parent] += served_der_kw[i];
        }
        for (std::size_t k = 0; k < f.lines.size(); ++k) {
            const std::size_t child = k + 1;
            const double served =
                std::max({served_load_kw[child], served_der_kw[child], 10.0});
            f.lines[k].impedance *= std::min(params.line_design_kw / served, 1.25);
        }
    }

    // Service transformers: some sites connect behind a small bank on a
    // dedicated low-voltage bus.
    {
        std::map<std::string, std::pair<double, double>> site_kva;  // bus -> (load kW, DER kVA)
        for (const auto& load : f.loads) site_kva[load.bus].first += load.p_kw;
        for (const auto& der : f.ders) site_kva[der.bus].second += der.s_rated_kva;
        for (const auto& [bus_id, kva] : site_kva) {
            if (rng.uniform01() >= params.transformer_density) continue;
            const std::string lv_id = bus_id + "_lv";
            f.buses.push_back({lv_id, 3, lv_kv, {}});
            TransformerBank tx;
            tx.from_bus = bus_id;
            tx.to_bus = lv_id;
            tx.rating_kva = standard_transformer_kva(1.25 * std::max(kva.first, kva.second));
            tx.series_impedance = Complex{0.01, 0.025};  // p.u. on own base
            tx.tap_ratio = 1.0;
            f.transformers.push_back(std::move(tx));
            for (auto& load : f.loads) {
                if (load.bus == bus_id) load.bus = lv_id;
            }
            for (auto& der : f.ders) {
                if (der.bus == bus_id) der.bus = lv_id;
            }
        }
    }

    // 24 hourly profile points.
    TimeSeriesProfiles profiles;
    profiles.timestamps_s.resize(24);
    for (int h = 0; h < 24; ++h) profiles.timestamps_s[h] = 3600.0 * h;
    for (const auto& load : f.loads) {
        profiles.load_ids.push_back(load.id);
        std::vector<double> p(24), q(24);
        for (int h = 0; h < 24; ++h) {
            const double shape = load_shape(h) / load_shape(19);  // peak-normalized
            p[h] = load.p_kw * shape;
            q[h] = load.q_kvar * shape;
        }
        profiles.load_p_kw.push_back(std::move(p));
        profiles.load_q_kvar.push_back(std::move(q));
    }
    for (std::size_t i = 0; i < f.ders.size(); ++i) {
        profiles.der_ids.push_back(f.ders[i].id);
        std::vector<double> p(24);
        for (int h = 0; h < 24; ++h) {
            p[h] = f.ders[i].p_rated_kw * availability[i] * solar_shape(h);
        }
        profiles.der_p_kw.push_back(std::move(p));
    }
    profiles.source_v_pu.assign(24, params.source_v_pu);

    const ValidationReport report = validate_topology(f);
    if (!report.valid()) {
        throw std::logic_error("generate_synthetic_feeder produced an invalid feeder:\n" +
                               report.to_string());
    }
    return {std::move(f), std::move(profiles)};
}

// --- Result writers ------------------------------------------------------

std::string result_to_csv(const ScenarioResult& result) {
    std::ostringstream os;
    os << "timestep,entity,field,value\n";
    auto row = [&os](std::size_t step, const std::string& entity, const std::string& field,
                     double value) {
        os << step << "," << entity << "," << field << "," << detail::format_double(value) << "\n";
    };
    for (const auto& step : result.steps) {
        const std::size_t k = step.step_index;
        row(k, "feeder", "t_s", step.t_s);
        row(k, "feeder", "converged", step.converged ? 1.0 : 0.0);
        row(k, "feeder", "pf_iterations", static_cast<double>(step.pf_iterations));
        row(k, "feeder", "max_v_pu", step.max_v_pu);
        row(k, "feeder", "min_v_pu", step.min_v_pu);
        row(k, "feeder", "violating_buses", static_cast<double>(step.violating_buses));
        row(k, "feeder", "loss_kw", step.loss_kw);
        row(k, "feeder", "feederhead_p_kw", step.feederhead_p_kw);
        row(k, "feeder", "feederhead_q_kvar", step.feederhead_q_kvar);
        row(k, "feeder", "total_der_q_kvar", step.total_der_q_kvar);
        row(k, "feeder", "total_der_q_abs_kvar", step.total_der_q_abs_kvar);
        for (std::size_t i = 0; i < step.transformer_loading_percent.size(); ++i) {
            row(k, "xfmr_" + std::to_string(i), "loading_percent",
                step.transformer_loading_percent[i]);
        }
        for (const auto& der : step.der_records) {
            row(k, der.der_id, "v_pu", der.v_pu);
            row(k, der.der_id, "p_kw", der.p_kw);
            row(k, der.der_id, "q_kvar", der.q_kvar);
            row(k, der.der_id, "pf", der.pf.magnitude());
            const double excitation = der.pf.excitation() == Excitation::inject ? 1.0
                                      : der.pf.excitation() == Excitation::absorb ? -1.0
                                                                                  : 0.0;
            row(k, der.der_id, "pf_excitation", excitation);
            row(k, der.der_id, "clamped", der.clamped ? 1.0 : 0.0);
        }
    }
    return os.str();
}

std::string result_summary_to_json(const ScenarioResult& result, const Feeder& feeder) {
    ordered_json j;
    j["mode"] = result.mode_label;
    j["static"] = result.is_static;
    j["steps"] = result.steps.size();
    if (!result.steps.empty()) {
        const ModeMetrics m = compute_mode_metrics(result, feeder);
        ordered_json jm;
        jm["max_v_pu"] = m.max_v_pu;
        jm["min_v_pu"] = m.min_v_pu;
        jm["violation_count"] = m.violation_count;
        jm["violating_bus_count"] = m.violating_bus_count;
        jm["lowest_der_pf"] = m.lowest_der_pf;
        jm["total_der_q_kvar"] = m.total_der_q_kvar;
        jm["total_der_q_abs_kvar"] = m.total_der_q_abs_kvar;
        jm["feederhead_p_kw"] = m.feederhead_p_kw;
        jm["feederhead_q_kvar"] = m.feederhead_q_kvar;
        jm["total_loss_kw"] = m.total_loss_kw;
        jm["transformer_loading_percent"] = m.transformer_loading_percent;
        j["metrics"] = std::move(jm);
    }
    j["implausible_voltage_samples"] = result.implausible_voltage_samples;
    j["diagnostics"] = result.diagnostics;
    return j.dump(2) + "\n";
}

void write_result(const ScenarioResult& result, const Feeder& feeder,
                  const std::filesystem::path& path, ResultFormat format) {
    if (format == ResultFormat::csv) {
        write_file(path, result_to_csv(result));
    } else {
        write_file(path, result_summary_to_json(result, feeder));
    }
}

}  // namespace feedersim
