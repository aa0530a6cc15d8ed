#pragma once

// Radial feeder data model: buses, series branches (lines and transformer
// banks), loads and DER units, plus topology validation, per-unit
// normalization and the downstream sweep ordering used by the solver.
//
// All types are immutable by convention once validated; operations return
// new values instead of mutating.

#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "feedersim/control_curves.hpp"

namespace feedersim {

using Complex = std::complex<double>;

struct VoltageLimits {
    double min_pu = 0.95;
    double max_pu = 1.05;

    friend bool operator==(const VoltageLimits&, const VoltageLimits&) = default;
};

/// Network node. `nominal_kv` is the line-to-neutral base voltage.
struct Bus {
    std::string id;
    int phase_count = 3;
    double nominal_kv = 0.0;
    VoltageLimits v_limits{};

    friend bool operator==(const Bus&, const Bus&) = default;
};

/// Series line segment, directed from the upstream bus to the downstream
/// bus. Impedance is ohms per phase (length already folded in) until the
/// owning feeder is normalized, per unit on the system base afterwards.
struct LineSegment {
    std::string from_bus;
    std::string to_bus;
    Complex impedance{};

    friend bool operator==(const LineSegment&, const LineSegment&) = default;
};

/// Two-winding transformer modeled as a series impedance behind an ideal
/// tap. `series_impedance` is per unit on the bank's own kVA base until the
/// feeder is normalized, per unit on the system base afterwards.
struct TransformerBank {
    std::string from_bus;
    std::string to_bus;
    double rating_kva = 0.0;
    Complex series_impedance{};
    double tap_ratio = 1.0;

    friend bool operator==(const TransformerBank&, const TransformerBank&) = default;
};

/// Constant-power demand. Positive values are consumption.
struct Load {
    std::string id;
    std::string bus;
    double p_kw = 0.0;
    double q_kvar = 0.0;

    friend bool operator==(const Load&, const Load&) = default;
};

/// Inverter-interfaced generator. `settings` may be empty, in which case
/// the scenario-level curve settings apply.
struct DerUnit {
    std::string id;
    std::string bus;
    double s_rated_kva = 0.0;
    double p_rated_kw = 0.0;
    ControlMode mode{};
    std::optional<CurveSettings> settings{};

    friend bool operator==(const DerUnit&, const DerUnit&) = default;
};

/// A radial feeder. The directed graph of lines + transformers rooted at
/// `source_bus` must be a tree spanning every bus. When `normalized` is
/// true, all impedances and power quantities are per unit on `base_mva`
/// and the per-bus voltage bases.
struct Feeder {
    double base_mva = 1.0;
    std::string source_bus;
    double source_v_pu = 1.0;
    bool normalized = false;
    std::vector<Bus> buses;
    std::vector<LineSegment> lines;
    std::vector<TransformerBank> transformers;
    std::vector<Load> loads;
    std::vector<DerUnit> ders;

    [[nodiscard]] const Bus* find_bus(std::string_view id) const;

    friend bool operator==(const Feeder&, const Feeder&) = default;
};

// DER sizing headroom: with Q support of 0.44 S_rated at rated P the
// operating point must still fit the rating circle, so
// p_rated <= s_rated * sqrt(1 - 0.44^2).
inline constexpr double k_der_sizing_q_fraction = 0.44;
double der_max_rated_p_kw(double s_rated_kva);

struct Violation {
    std::string code;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    [[nodiscard]] bool valid() const { return violations.empty(); }
    [[nodiscard]] std::string to_string() const;
};

/// Full structural check: radiality (edge count, connectivity, no cycles,
/// single parent per bus), reference integrity for every branch/load/DER,
/// base consistency and per-element invariants. Collects every violation
/// instead of stopping at the first.
ValidationReport validate_topology(const Feeder& feeder);

/// Converts impedances and power quantities to per unit on base_mva and the
/// per-bus voltage bases. Line impedance uses the upstream bus base;
/// transformer impedance is rebased from the bank's own kVA to the system
/// base. Idempotent: a feeder with `normalized` set is returned unchanged.
/// Throws std::invalid_argument on a non-positive bus nominal_kv or base.
Feeder per_unit_normalize(const Feeder& feeder);

/// Uniform view over lines followed by transformers, the branch indexing
/// used by SweepOrder and the power-flow solution.
struct BranchView {
    std::string from_bus;
    std::string to_bus;
    Complex impedance{};
    double tap_ratio = 1.0;
    bool is_transformer = false;
    double rating_kva = 0.0;
};

std::vector<BranchView> unified_branches(const Feeder& feeder);

/// Source-to-leaves ordering for sweep solvers. `bus_order` is topological
/// with the source first; `branch_order` lists unified branch indices with
/// every parent branch before its children. Reversing either gives the
/// leaves-to-source pass. Throws std::invalid_argument if the feeder is not
/// radial (validate first for a full report).
struct SweepOrder {
    std::vector<std::size_t> bus_order;
    std::vector<std::size_t> branch_order;
    std::vector<int> parent_bus;     // per bus index, -1 at the source
    std::vector<int> parent_branch;  // per bus index, -1 at the source
};

SweepOrder downstream_order(const Feeder& feeder);

}  // namespace feedersim
