#pragma once

// Grid-support curves for smart inverters: volt-VAr, volt-PF (power factor
// as a piecewise-linear function of terminal voltage), volt-PF ver. 2
// (voltage-to-Q droop scaled by operating active power), plus the constant
// setpoint modes used as comparison baselines.
//
// Sign convention throughout: positive Q = injection (over-excited,
// capacitive), negative Q = absorption (under-excited, inductive).

#include <string>

namespace feedersim {

/// Reactive-power direction of an inverter operating point.
enum class Excitation { inject, absorb, unity };

std::string to_string(Excitation e);

/// Power factor carrying its excitation direction explicitly.
///
/// A signed PF scalar jumps from +1 to -1 across the deadband even though
/// the commanded Q is continuous; storing magnitude + direction avoids that
/// ambiguity. Invariant: excitation == unity exactly when magnitude == 1,
/// which the factories enforce (inject(1.0) normalizes to unity).
class SignedPF {
public:
    SignedPF() = default;  // unity

    static SignedPF unity() noexcept { return SignedPF{}; }
    static SignedPF inject(double magnitude);  // throws if magnitude outside (0, 1]
    static SignedPF absorb(double magnitude);

    [[nodiscard]] double magnitude() const noexcept { return magnitude_; }
    [[nodiscard]] Excitation excitation() const noexcept { return excitation_; }
    [[nodiscard]] bool is_unity() const noexcept { return excitation_ == Excitation::unity; }

    /// +magnitude for injection, -magnitude for absorption, +1 at unity.
    [[nodiscard]] double signed_value() const noexcept;

    friend bool operator==(const SignedPF&, const SignedPF&) = default;

private:
    SignedPF(double magnitude, Excitation excitation)
        : magnitude_(magnitude), excitation_(excitation) {}

    double magnitude_ = 1.0;
    Excitation excitation_ = Excitation::unity;
};

/// Breakpoints and saturation limits shared by every droop curve.
///
/// v1 < v2 bound the over-excited (injection) droop region, v4 < v5 the
/// under-excited (absorption) one, [v2, v4] is the deadband. PF limits are
/// stored as magnitudes; the curve functions attach the direction. Q limits
/// are fractions of S_rated and apply to the volt-VAr shaped curves only.
struct CurveSettings {
    double v1 = 0.0;
    double v2 = 0.0;
    double v4 = 0.0;
    double v5 = 0.0;
    double pf_lim_inject = 1.0;
    double pf_lim_absorb = 1.0;
    double q_lim_inject_pu = 0.0;
    double q_lim_absorb_pu = 0.0;

    /// Throws std::invalid_argument on any violated invariant
    /// (0 < v1 < v2 <= v4 < v5, PF limits in (0,1], Q limits in [0,1]).
    void validate() const;

    friend bool operator==(const CurveSettings&, const CurveSettings&) = default;
};

/// Reactive-power setpoint. Positive = injection, negative = absorption.
struct QCommand {
    double q_kvar = 0.0;
};

enum class ControlKind {
    unity_pf,
    volt_var,
    volt_pf,
    volt_pf2,
    constant_pf,
    constant_q,
};

/// A DER's grid-support mode plus the payload for the constant modes.
struct ControlMode {
    ControlKind kind = ControlKind::unity_pf;
    SignedPF pf{};           // used when kind == constant_pf
    double q_set_pu = 0.0;   // used when kind == constant_q, fraction of S_rated

    static ControlMode unity_pf() { return {}; }
    static ControlMode volt_var() { return {ControlKind::volt_var, {}, 0.0}; }
    static ControlMode volt_pf() { return {ControlKind::volt_pf, {}, 0.0}; }
    static ControlMode volt_pf2() { return {ControlKind::volt_pf2, {}, 0.0}; }
    static ControlMode constant_pf(SignedPF pf) { return {ControlKind::constant_pf, pf, 0.0}; }
    static ControlMode constant_q(double q_set_pu);  // throws if |q_set_pu| > 1

    [[nodiscard]] std::string label() const;

    friend bool operator==(const ControlMode&, const ControlMode&) = default;
};

/// Parses a mode label as accepted by the CLI: "unity_pf", "volt_var",
/// "volt_pf", "volt_pf2" (separators optional), "constpf:<mag><i|a>",
/// "constq:<q_pu>". Throws std::invalid_argument on anything else.
ControlMode parse_control_mode(const std::string& text);

// --- Curve evaluation ------------------------------------------------------

/// Volt-VAr: piecewise-linear Q(V). Saturates at +q_lim_inject_pu * S below
/// v1 and -q_lim_absorb_pu * S above v5, zero inside [v2, v4], linear in the
/// droop regions. Total and continuous in v.
QCommand voltvar_q(double v_pcc_pu, double s_rated_kva, const CurveSettings& settings);

/// Volt-PF: piecewise-linear PF(V). Unity in the deadband, droops to
/// pf_lim_inject at v1 and pf_lim_absorb at v5; magnitude is continuous at
/// every breakpoint.
SignedPF voltpf_pf(double v_pcc_pu, const CurveSettings& settings);

/// Q(PF) = P tan(cos^-1(PF)), signed by the excitation. Requires p_kw >= 0.
QCommand q_from_pf(double p_kw, const SignedPF& pf);

/// Volt-PF reactive power, evaluated from the piecewise regional equations.
/// Defining identity: equals q_from_pf(p_kw, voltpf_pf(v_pcc_pu, settings)).
QCommand voltpf_q(double v_pcc_pu, double p_kw, const CurveSettings& settings);

/// Volt-PF ver. 2: the volt-VAr shape scaled by p_kw / p_rated_kw, giving a
/// linear V-Q relation that still tracks the operating active power.
/// Requires 0 <= p_kw <= p_rated_kw and p_rated_kw > 0.
QCommand voltpf2_q(double v_pcc_pu, double p_kw, double p_rated_kw, double s_rated_kva,
                   const CurveSettings& settings);

/// Constant-PF mode; same contract as q_from_pf, kept as a distinct mode
/// for scenario reporting.
QCommand constant_pf_q(double p_kw, const SignedPF& pf);

/// Constant-Q mode: q_set_pu * S_rated regardless of voltage and power.
/// Requires |q_set_pu| <= 1.
QCommand constant_q(double q_set_pu, double s_rated_kva);

/// IEEE 1547-2018 default volt-VAr breakpoints with the matching PF limits:
/// v1 0.92, v2 0.98, v4 1.02, v5 1.08, Q limits 0.44, PF limits 0.9.
CurveSettings preset_ieee1547_default();

// --- Capability and reporting helpers --------------------------------------

struct CapabilityResult {
    double p_kw = 0.0;
    double q_kvar = 0.0;
    bool clamped = false;
};

/// Clamps a (P, Q) operating point onto the apparent-power circle with P
/// priority: Q is reduced first; if P alone exceeds the rating, P is clamped
/// to s_rated_kva and Q to zero.
CapabilityResult apply_capability_limit(double p_kw, double q_kvar, double s_rated_kva);

/// Operating PF of a (P, Q) point for reporting. P == 0 reports unity.
SignedPF achieved_pf(double p_kw, double q_kvar);

/// Curves accept any positive voltage; values outside this band are treated
/// as implausible measurements and flagged in scenario diagnostics.
bool plausible_voltage(double v_pu);

}  // namespace feedersim
