#include "feedersim/control_curves.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace feedersim {

namespace {

// tan(acos(m)) for m in (0, 1], written in the algebraic form that is exact
// at m == 1 and avoids the acos/tan round trip.
double tan_acos(double magnitude) {
    return std::sqrt((1.0 - magnitude) * (1.0 + magnitude)) / magnitude;
}

// PF magnitude on the over-excited droop interval (v1, v2).
double inject_droop_magnitude(double v, const CurveSettings& s) {
    return 1.0 - (s.v2 - v) * (1.0 - s.pf_lim_inject) / (s.v2 - s.v1);
}

// PF magnitude on the under-excited droop interval (v4, v5).
double absorb_droop_magnitude(double v, const CurveSettings& s) {
    return 1.0 - (v - s.v4) * (1.0 - s.pf_lim_absorb) / (s.v5 - s.v4);
}

}  // namespace

std::string to_string(Excitation e) {
    switch (e) {
        case Excitation::inject: return "inject";
        case Excitation::absorb: return "absorb";
        case Excitation::unity: return "unity";
    }
    return "unity";
}

SignedPF SignedPF::inject(double magnitude) {
    if (!(magnitude > 0.0) || magnitude > 1.0) {
        throw std::invalid_argument("SignedPF magnitude must be in (0, 1], got " +
                                    std::to_string(magnitude));
    }
    if (magnitude == 1.0) return unity();
    return SignedPF{magnitude, Excitation::inject};
}

SignedPF SignedPF::absorb(double magnitude) {
    if (!(magnitude > 0.0) || magnitude > 1.0) {
        throw std::invalid_argument("SignedPF magnitude must be in (0, 1], got " +
                                    std::to_string(magnitude));
    }
    if (magnitude == 1.0) return unity();
    return SignedPF{magnitude, Excitation::absorb};
}

double SignedPF::signed_value() const noexcept {
    return excitation_ == Excitation::absorb ? -magnitude_ : magnitude_;
}

void CurveSettings::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("CurveSettings: " + what); };
    if (!(0.0 < v1 && v1 < v2 && v2 <= v4 && v4 < v5)) {
        std::ostringstream os;
        os << "breakpoints must satisfy 0 < v1 < v2 <= v4 < v5, got "
           << v1 << ", " << v2 << ", " << v4 << ", " << v5;
        fail(os.str());
    }
    if (!(pf_lim_inject > 0.0) || pf_lim_inject > 1.0) fail("pf_lim_inject outside (0, 1]");
    if (!(pf_lim_absorb > 0.0) || pf_lim_absorb > 1.0) fail("pf_lim_absorb outside (0, 1]");
    if (!(q_lim_inject_pu >= 0.0) || q_lim_inject_pu > 1.0) fail("q_lim_inject_pu outside [0, 1]");
    if (!(q_lim_absorb_pu >= 0.0) || q_lim_absorb_pu > 1.0) fail("q_lim_absorb_pu outside [0, 1]");
}

ControlMode ControlMode::constant_q(double q_set_pu) {
    if (std::abs(q_set_pu) > 1.0) {
        throw std::invalid_argument("constant_q setpoint must satisfy |q_set_pu| <= 1");
    }
    return {ControlKind::constant_q, {}, q_set_pu};
}

std::string ControlMode::label() const {
    switch (kind) {
        case ControlKind::unity_pf: return "unity_pf";
        case ControlKind::volt_var: return "volt_var";
        case ControlKind::volt_pf: return "volt_pf";
        case ControlKind::volt_pf2: return "volt_pf2";
        case ControlKind::constant_pf: {
            std::ostringstream os;
            os << "constpf:" << pf.magnitude()
               << (pf.excitation() == Excitation::absorb ? "a" : "i");
            return os.str();
        }
        case ControlKind::constant_q: {
            std::ostringstream os;
            os << "constq:" << q_set_pu;
            return os.str();
        }
    }
    return "unity_pf";
}

ControlMode parse_control_mode(const std::string& text) {
    // Only the mode name is case/separator insensitive; numeric arguments
    // after ':' are taken verbatim.
    const auto colon = text.find(':');
    std::string flat;
    for (char c : text.substr(0, colon)) {
        if (c == '_' || c == '-') continue;
        flat += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (colon == std::string::npos) {
        if (flat == "unitypf" || flat == "unity") return ControlMode::unity_pf();
        if (flat == "voltvar") return ControlMode::volt_var();
        if (flat == "voltpf") return ControlMode::volt_pf();
        if (flat == "voltpf2" || flat == "voltpfv2" || flat == "voltpfver2") {
            return ControlMode::volt_pf2();
        }
    } else {
        const std::string& head = flat;
        std::string arg = text.substr(colon + 1);
        if (head == "constpf" || head == "constantpf") {
            Excitation e = Excitation::absorb;
            if (!arg.empty() && (arg.back() == 'i' || arg.back() == 'a')) {
                e = arg.back() == 'i' ? Excitation::inject : Excitation::absorb;
                arg.pop_back();
            }
            double mag = std::stod(arg);
            return ControlMode::constant_pf(e == Excitation::inject ? SignedPF::inject(mag)
                                                                    : SignedPF::absorb(mag));
        }
        if (head == "constq" || head == "constantq") {
            return ControlMode::constant_q(std::stod(arg));
        }
    }
    throw std::invalid_argument("unknown control mode '" + text + "'");
}

QCommand voltvar_q(double v_pcc_pu, double s_rated_kva, const CurveSettings& s) {
    if (v_pcc_pu <= s.v1) return {s.q_lim_inject_pu * s_rated_kva};
    if (v_pcc_pu < s.v2) {
        return {(s.v2 - v_pcc_pu) * s.q_lim_inject_pu * s_rated_kva / (s.v2 - s.v1)};
    }
    if (v_pcc_pu <= s.v4) return {0.0};
    if (v_pcc_pu < s.v5) {
        return {-(v_pcc_pu - s.v4) * s.q_lim_absorb_pu * s_rated_kva / (s.v5 - s.v4)};
    }
    return {-s.q_lim_absorb_pu * s_rated_kva};
}

SignedPF voltpf_pf(double v_pcc_pu, const CurveSettings& s) {
    if (v_pcc_pu <= s.v1) return SignedPF::inject(s.pf_lim_inject);
    if (v_pcc_pu < s.v2) return SignedPF::inject(inject_droop_magnitude(v_pcc_pu, s));
    if (v_pcc_pu <= s.v4) return SignedPF::unity();
    if (v_pcc_pu < s.v5) return SignedPF::absorb(absorb_droop_magnitude(v_pcc_pu, s));
    return SignedPF::absorb(s.pf_lim_absorb);
}

QCommand q_from_pf(double p_kw, const SignedPF& pf) {
    if (p_kw < 0.0) throw std::invalid_argument("q_from_pf requires p_kw >= 0");
    if (pf.is_unity()) return {0.0};
    const double q = p_kw * tan_acos(pf.magnitude());
    return {pf.excitation() == Excitation::absorb ? -q : q};
}

QCommand voltpf_q(double v_pcc_pu, double p_kw, const CurveSettings& s) {
    if (p_kw < 0.0) throw std::invalid_argument("voltpf_q requires p_kw >= 0");
    if (v_pcc_pu <= s.v1) return {p_kw * tan_acos(s.pf_lim_inject)};
    if (v_pcc_pu < s.v2) {
        const double m = inject_droop_magnitude(v_pcc_pu, s);
        return {m >= 1.0 ? 0.0 : p_kw * tan_acos(m)};
    }
    if (v_pcc_pu <= s.v4) return {0.0};
    if (v_pcc_pu < s.v5) {
        const double m = absorb_droop_magnitude(v_pcc_pu, s);
        return {m >= 1.0 ? 0.0 : -p_kw * tan_acos(m)};
    }
    return {-p_kw * tan_acos(s.pf_lim_absorb)};
}

QCommand voltpf2_q(double v_pcc_pu, double p_kw, double p_rated_kw, double s_rated_kva,
                   const CurveSettings& s) {
    if (p_rated_kw <= 0.0) throw std::invalid_argument("voltpf2_q requires p_rated_kw > 0");
    if (p_kw < 0.0 || p_kw > p_rated_kw) {
        throw std::invalid_argument("voltpf2_q requires 0 <= p_kw <= p_rated_kw");
    }
    return {(p_kw / p_rated_kw) * voltvar_q(v_pcc_pu, s_rated_kva, s).q_kvar};
}

QCommand constant_pf_q(double p_kw, const SignedPF& pf) {
    return q_from_pf(p_kw, pf);
}

QCommand constant_q(double q_set_pu, double s_rated_kva) {
    if (std::abs(q_set_pu) > 1.0) {
        throw std::invalid_argument("constant_q requires |q_set_pu| <= 1");
    }
    return {q_set_pu * s_rated_kva};
}

CurveSettings preset_ieee1547_default() {
    CurveSettings s;
    s.v1 = 0.92;
    s.v2 = 0.98;
    s.v4 = 1.02;
    s.v5 = 1.08;
    s.pf_lim_inject = 0.9;
    s.pf_lim_absorb = 0.9;
    s.q_lim_inject_pu = 0.44;
    s.q_lim_absorb_pu = 0.44;
    return s;
}

CapabilityResult apply_capability_limit(double p_kw, double q_kvar, double s_rated_kva) {
    if (p_kw < 0.0) throw std::invalid_argument("apply_capability_limit requires p_kw >= 0");
    const double s2 = s_rated_kva * s_rated_kva;
    if (p_kw * p_kw + q_kvar * q_kvar <= s2) return {p_kw, q_kvar, false};
    if (p_kw >= s_rated_kva) return {s_rated_kva, 0.0, true};
    const double q_max = std::sqrt(s2 - p_kw * p_kw);
    return {p_kw, q_kvar >= 0.0 ? q_max : -q_max, true};
}

SignedPF achieved_pf(double p_kw, double q_kvar) {
    if (p_kw == 0.0) return SignedPF::unity();
    const double mag = std::abs(p_kw) / std::hypot(p_kw, q_kvar);
    if (q_kvar == 0.0 || mag >= 1.0) return SignedPF::unity();
    return q_kvar > 0.0 ? SignedPF::inject(mag) : SignedPF::absorb(mag);
}

bool plausible_voltage(double v_pu) {
    return v_pu >= 0.5 && v_pu <= 1.5;
}

}  // namespace feedersim
