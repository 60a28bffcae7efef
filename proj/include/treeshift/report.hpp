#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include <json.hpp>

#include "capacity.hpp"
#include "constants.hpp"
#include "dynamics.hpp"

namespace treeshift::report {

using json = nlohmann::json;  // objects keep keys sorted

inline json num(double x) { return format_double(x); }

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline json to_json(const Budget& b) {
    return {{"depth", b.depth},         {"vertices", b.vertices},       {"max_period", b.max_period},
            {"eps_steps", b.eps_steps}, {"sample_depth", b.sample_depth}, {"sample_size", b.sample_size},
            {"threads", b.threads},     {"tol", num(b.tol)}};
}

inline json to_json(const BoundEstimate& e) {
    json ev = json::array();
    for (const auto& x : e.evidence) ev.push_back({{"depth", x.depth}, {"value", num(x.value)}});
    return {{"value", num(e.value)},
            {"status", to_string(e.status)},
            {"upper", num(e.upper)},
            {"tolerance", num(e.tolerance)},
            {"last_increment", num(e.last_increment)},
            {"certificate", e.certificate},
            {"evidence", ev}};
}

inline json to_json(const Verdict& v) {
    json q = json::array();
    for (const auto& [k, x] : v.quantities) q.push_back({{"name", k}, {"value", num(x)}});
    return {{"answer", to_string(v.answer)}, {"theorem", v.theorem},  {"certificate", v.certificate},
            {"reason", v.reason},            {"quantities", q},       {"vertices", v.vertices}};
}

inline json to_json(const Tree& t, const ResidualReport& r) {
    return {{"max_residual", num(r.max_residual)},
            {"worst", r.worst ? json(t.name(*r.worst)) : json(nullptr)},
            {"checked", r.checked},
            {"skipped", r.skipped},
            {"tolerance", num(r.tolerance)},
            {"invariant", r.invariant()}};
}

// Flow values on the given vertices, in the given order.
inline json flow_table(const Flow& f, const std::vector<Vertex>& vertices) {
    json rows = json::array();
    const Tree& t = f.tree();
    const std::int64_t d0 = t.source().depth(f.base());
    for (const auto& v : vertices)
        rows.push_back({{"vertex", t.name(v)}, {"generation", t.source().depth(v) - d0}, {"value", num(f(v))}});
    return rows;
}

inline json to_json(const CapacityReport& c, const Tree& t) {
    return {{"value", to_json(c.value)},
            {"basepoint", t.name(c.basepoint)},
            {"q", num(c.q)},
            {"q_dual", num(c.q_dual)},
            {"r_plus", to_json(c.r_plus)},
            {"r_minus", to_json(c.r_minus)},
            {"r_plus_power", num(c.r_plus_power)},
            {"r_minus_power", num(c.r_minus_power)},
            {"basepoint_power", num(c.basepoint_power)},
            {"energy", to_json(c.energy)},
            {"spine_limit", num(c.spine_limit)},
            {"spine_limit_status", to_string(c.spine_limit_status)},
            {"formula", c.formula}};
}

// Indented "key: value" rendering for terminals.
inline void render(const json& j, std::string& out, int indent = 0) {
    const std::string pad(std::size_t(indent) * 2, ' ');
    auto scalar = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            if (v.is_structured() && !v.empty()) {
                out += pad + k + ":\n";
                render(v, out, indent + 1);
            } else {
                out += pad + k + ": " + (v.is_structured() ? std::string("-") : scalar(v)) + "\n";
            }
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            if (v.is_object()) {
                std::string row;
                for (const auto& [k, x] : v.items()) {
                    if (!row.empty()) row += "  ";
                    row += k + "=" + (x.is_structured() ? x.dump() : scalar(x));
                }
                out += pad + "- " + row + "\n";
            } else {
                out += pad + "- " + scalar(v) + "\n";
            }
        }
    } else {
        out += pad + scalar(j) + "\n";
    }
}

}  // namespace treeshift::report
