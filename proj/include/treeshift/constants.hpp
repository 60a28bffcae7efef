#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "engine.hpp"

namespace treeshift {

// c_p(V(v), mu) for the subtree of v; v defaults to the base (the root of a rooted tree).
inline BoundEstimate continued_fraction(const Tree& tree, const Exponent& p, const Budget& budget = {},
                                        std::optional<Vertex> v = std::nullopt) {
    budget.validate();
    ResistanceEngine eng(tree, p, budget);
    return eng.continued_fraction(v.value_or(tree.base()));
}

inline BoundEstimate resistance(const Tree& tree, const Exponent& p, const Budget& budget = {},
                                std::optional<Vertex> v = std::nullopt) {
    budget.validate();
    ResistanceEngine eng(tree, p, budget);
    return eng.resistance(v.value_or(tree.base()));
}

// Follows the first child for `length` steps, stopping at a leaf.
inline std::vector<Vertex> first_child_branch(const Tree& tree, const Vertex& start, int length) {
    std::vector<Vertex> out{start};
    for (int i = 0; i < length; ++i) {
        auto groups = tree.child_groups(out.back());
        auto it = std::find_if(groups.begin(), groups.end(), [](const ChildGroup& g) { return g.count > 0.0; });
        if (it == groups.end()) break;
        out.push_back(it->member(0));
    }
    return out;
}

struct BranchExpansion {
    std::vector<Vertex> branch;
    std::vector<double> convergents;  // d_m, m = 1 .. branch.size() - 1
    std::vector<double> side_terms;   // 1 / c_p'(W_n)^{p*}
    Status status = Status::Exact;    // worst status among the side resistances
    BoundEstimate limit;              // c_p(V) from the truncation recurrence
};

// Convergents d_m of c_p along a branch v_0, v_1, ... with side trees W_n = V(v_n) \ V(v_{n+1}).
// 1 / c_p'(W_n)^{p*} is the sum of r_p(V(u))^{-p*} over the other children u of v_n (0 for a
// singleton W_n, inf when an infinite group of equal children occurs).
inline BranchExpansion branch_expansion(const Tree& tree, const Exponent& p, const std::vector<Vertex>& branch,
                                        const Budget& budget = {}) {
    if (p.is_one()) throw std::invalid_argument("branch expansion needs p > 1");
    if (branch.size() < 2) throw std::invalid_argument("branch needs at least two vertices");
    for (std::size_t i = 1; i < branch.size(); ++i)
        if (tree.parent(branch[i]) != branch[i - 1]) throw std::invalid_argument("not a branch: " + tree.name(branch[i]));
    budget.validate();
    ResistanceEngine eng(tree, p, budget);
    const double q = p.is_infinite() ? 1.0 : p.conjugate();
    BranchExpansion out;
    out.branch = branch;
    auto r_pow = [&](const Vertex& u) {  // r_p(V(u))^{-q}
        BoundEstimate r = eng.resistance(u);
        out.status = worse(out.status, r.status);
        if (r.status == Status::CertifiedInfinite || std::isinf(r.value)) return 0.0;
        return std::pow(r.value, -q);
    };
    const std::size_t m = branch.size() - 1;
    for (std::size_t n = 0; n < m; ++n) {
        double acc = 0.0;
        for (const auto& g : tree.child_groups(branch[n])) {
            if (g.count <= 0.0) continue;
            if (g.kind == ChildGroup::Kind::Plain) {
                for (std::int64_t i = 0; i < std::int64_t(g.count); ++i)
                    if (g.member(i) != branch[n + 1]) acc += r_pow(g.member(i));
                continue;
            }
            auto f = eng.group_factor(g);
            double rep = r_pow(g.member(0));
            bool holds_next = false;
            for (std::int64_t i = 0; i < std::min<std::int64_t>(std::int64_t(std::min(g.count, 1e6)), 1 << 16); ++i)
                if (g.member(i) == branch[n + 1]) {
                    holds_next = true;
                    break;
                }
            if (f.forces_zero) {
                acc = kInf;
                continue;
            }
            acc += rep * std::exp(f.log_mass);
            if (holds_next) acc -= r_pow(branch[n + 1]);
        }
        out.side_terms.push_back(std::max(acc, 0.0));
    }
    auto weight = [&](const Vertex& v) { return std::abs(tree.mu(v)); };
    for (std::size_t len = 1; len <= m; ++len) {
        double R = weight(branch[len]);
        double C = 0.0;
        for (std::size_t n = len; n-- > 0;) {
            double y = out.side_terms[n] + std::pow(R, -q);
            C = std::isinf(y) ? 0.0 : std::pow(y, -1.0 / q);
            if (n == 0) break;
            R = p.is_infinite() ? std::max(weight(branch[n]), C)
                                : std::pow(std::pow(weight(branch[n]), p.value()) + std::pow(C, p.value()), 1.0 / p.value());
        }
        out.convergents.push_back(C);
    }
    out.limit = eng.continued_fraction(branch.front());
    return out;
}

}  // namespace treeshift
