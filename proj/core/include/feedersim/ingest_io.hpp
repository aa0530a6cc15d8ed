#pragma once

// File formats and synthetic feeder generation. Feeders and curve settings
// travel as JSON, profiles and results as CSV; docs/formats.md documents
// every schema. Loaders parse, then validate, then return; no partially
// constructed object escapes.

#include <cstdint>
#include <filesystem>
#include <string>

#include "feedersim/grid_model.hpp"
#include "feedersim/metrics_report.hpp"
#include "feedersim/sim_engine.hpp"

namespace feedersim {

/// Parse failure with file/key context in what().
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads and fully validates a feeder document; topology violations are
/// reported with the offending element named.
Feeder load_feeder(const std::filesystem::path& path);
Feeder parse_feeder_json(const std::string& text, const std::string& origin = "<string>");

void save_feeder(const Feeder& feeder, const std::filesystem::path& path);
std::string feeder_to_json(const Feeder& feeder);

/// Reads curve settings from either a bare object or one wrapped under a
/// top-level "curve_settings" key (the preset file layout).
CurveSettings load_curve_settings(const std::filesystem::path& path);
std::string curve_settings_to_json(const CurveSettings& settings);

/// Profile CSV with header `timestamp,entity_id,kind,value`; kind is one of
/// load_p, load_q, der_p, source_v. Timestamps are integer minutes or
/// ISO-8601. Every entity must cover every timestamp; gaps are listed in
/// the error.
TimeSeriesProfiles load_profiles(const std::filesystem::path& path);
void save_profiles(const TimeSeriesProfiles& profiles, const std::filesystem::path& path);
std::string profiles_to_csv(const TimeSeriesProfiles& profiles);

struct SyntheticFeederParams {
    std::size_t bus_count = 60;       // backbone buses; service buses are added on top
    int branching_factor = 2;
    // Per-segment impedance draw, p.u. on base_mva, for a lateral sized to
    // carry line_design_kw. Segments serving more power are tapered down
    // proportionally (heavier conductor on the trunk), segments serving
    // less are never scaled up by more than 25 percent.
    double line_r_min_pu = 0.09;
    double line_r_max_pu = 0.15;
    double line_x_min_pu = 0.09;
    double line_x_max_pu = 0.13;
    double line_design_kw = 80.0;
    std::size_t load_count = 36;
    double load_kw_min = 2.0;         // pre-scaling draw range; see docs/formats.md
    double load_kw_max = 10.0;
    std::size_t der_count = 20;
    double penetration_percent = 200.0;  // sum of DER rated P over peak load
    double availability_min = 0.2;       // per-DER midday fraction of rated P
    double availability_max = 1.0;
    double transformer_density = 0.25;   // chance a load/DER site sits behind a service bank
    double base_mva = 1.0;
    double source_v_pu = 1.02;
    std::uint64_t seed = 42;
};

struct SyntheticFeeder {
    Feeder feeder;
    TimeSeriesProfiles profiles;  // 24 hourly points
};

/// Seeded random radial feeder plus 24-hour profiles: chain-biased tree,
/// leaf-biased load/DER placement, DER ratings from {5, 8, 12, 15, 20} kW
/// sized so full Q support at rated P needs no curtailment, solar-bell DER
/// availability and double-peak load shape. Identical params give an
/// identical feeder on every platform (mt19937_64 with explicit integer and
/// [0,1) mappings, no libc distributions).
SyntheticFeeder generate_synthetic_feeder(const SyntheticFeederParams& params);

enum class ResultFormat { csv, json_summary };

/// Long-format CSV (timestep,entity,field,value) or a JSON summary with the
/// aggregate mode metrics.
void write_result(const ScenarioResult& result, const Feeder& feeder,
                  const std::filesystem::path& path, ResultFormat format);
std::string result_to_csv(const ScenarioResult& result);
std::string result_summary_to_json(const ScenarioResult& result, const Feeder& feeder);

}  // namespace feedersim
