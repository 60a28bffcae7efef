#pragma once

#include <optional>
#include <string>

#include "flows.hpp"

namespace treeshift {

// Capacity of order q pairs with resistances of order q* = q / (q - 1).
struct CapacityReport {
    BoundEstimate value;
    Vertex basepoint;
    double q = 2.0;
    double q_dual = 2.0;
    BoundEstimate r_plus;   // r_{q*}(V(v0), w)
    BoundEstimate r_minus;  // r_{q*}(V_-(v0), w); w_{v0} when v0 is a root
    double r_plus_power = 0.0;   // r_plus^{q*}
    double r_minus_power = 0.0;  // r_minus^{q*}
    double basepoint_power = 0.0;  // w_{v0}^{q*}
    std::optional<Flow> equilibrium;  // unit flow of minimal q*-energy
    BoundEstimate energy;
    double spine_limit = 0.0;  // f at the root, or its limit toward -infinity
    Status spine_limit_status = Status::Unknown;
    std::string formula;
};

namespace detail {

inline Exponent capacity_exponent(double q) {
    if (!(q > 1.0 && q < kInf)) throw std::invalid_argument("capacity order q must lie in (1, inf)");
    return Exponent(q);
}

// cap = x^{-q/q*} for x = energy, with the status of x
inline BoundEstimate capacity_from_energy(const BoundEstimate& energy, double q, double q_dual) {
    BoundEstimate c;
    c.tolerance = energy.tolerance;
    const double e = -q / q_dual;
    if (energy.status == Status::CertifiedInfinite || energy.value == kInf) {
        c.value = c.upper = 0.0;
        c.status = Status::Exact;
        c.certificate = "infinite resistance";
        return c;
    }
    c.value = std::pow(energy.value, e);
    c.upper = c.value;  // energy.value is a lower bound for the energy
    c.status = energy.status;
    if (energy.upper < kInf) c.last_increment = c.value - std::pow(energy.upper, e);
    for (const auto& ev : energy.evidence) c.evidence.push_back({ev.depth, std::pow(ev.value, e)});
    c.certificate = energy.certificate;
    return c;
}

}  // namespace detail

inline CapacityReport capacity_with_basepoint(const Tree& tree, const Vertex& v0, double q, const Budget& budget = {}) {
    Exponent eq = detail::capacity_exponent(q);
    Exponent r_exp(eq.conjugate());
    const double qd = r_exp.value();
    if (!tree.contains(v0)) throw std::invalid_argument("basepoint not in tree");
    UnrootedFlow u = unrooted_unit_flow(tree, v0, r_exp, budget, 1);
    CapacityReport out;
    out.basepoint = v0;
    out.q = q;
    out.q_dual = qd;
    out.r_plus = u.plus.norm;
    out.r_minus = u.minus.norm;
    if (!u.plus.available) out.r_plus.status = Status::CertifiedInfinite, out.r_plus.value = kInf;
    if (!u.minus.available) out.r_minus.status = Status::CertifiedInfinite, out.r_minus.value = kInf;
    out.r_plus_power = std::pow(out.r_plus.value, qd);
    out.r_minus_power = std::pow(out.r_minus.value, qd);
    out.basepoint_power = std::pow(std::abs(tree.mu(v0)), qd);
    out.energy = u.energy;
    out.value = detail::capacity_from_energy(u.energy, q, qd);
    out.formula = "cap_q = (r_q*(V(v0))^q* + r_q*(V_-(v0))^q* - w_v0^q*)^(-q/q*), q = " + format_double(q) +
                  ", q* = " + format_double(qd);
    if (u.plus.available && u.minus.available) out.equilibrium = u.flow;
    out.spine_limit = u.spine_limit;
    out.spine_limit_status = u.spine_limit_status;
    return out;
}

inline CapacityReport boundary_capacity(const Tree& tree, double q, const Budget& budget = {}) {
    if (!tree.rooted()) throw std::invalid_argument("boundary capacity without a basepoint needs a rooted tree");
    Exponent eq = detail::capacity_exponent(q);
    Exponent r_exp(eq.conjugate());
    const double qd = r_exp.value();
    const Vertex root = *tree.root();
    MinimalFlow m = minimal_unit_flow(tree, root, r_exp, budget);
    CapacityReport out;
    out.basepoint = root;
    out.q = q;
    out.q_dual = qd;
    out.r_plus = m.norm;
    if (!m.available) out.r_plus.status = Status::CertifiedInfinite, out.r_plus.value = kInf;
    const double w = std::abs(tree.mu(root));
    out.r_minus.value = out.r_minus.upper = w;
    out.r_minus.status = Status::Exact;
    out.r_minus.certificate = "the root is its own backward component";
    out.r_plus_power = std::pow(out.r_plus.value, qd);
    out.r_minus_power = out.basepoint_power = std::pow(w, qd);
    out.energy = out.r_plus;
    out.energy.value = out.r_plus_power;
    out.energy.upper = std::pow(out.r_plus.upper, qd);
    for (auto& ev : out.energy.evidence) ev.value = std::pow(ev.value, qd);
    out.value = detail::capacity_from_energy(out.energy, q, qd);
    out.formula = "cap_q = r_q*(V)^(-q), q = " + format_double(q) + ", q* = " + format_double(qd);
    if (m.available) out.equilibrium = m.flow;
    out.spine_limit = 1.0;
    out.spine_limit_status = Status::Exact;
    return out;
}

}  // namespace treeshift
