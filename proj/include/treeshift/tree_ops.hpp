#pragma once

#include <map>
#include <memory>
#include <set>
#include <utility>
#include <vector>

#include "sources.hpp"

namespace treeshift {

struct Generation {
    std::vector<Vertex> vertices;
    bool truncated = false;  // more vertices exist than were listed
};

struct GenerationMap {
    std::map<std::int64_t, Generation> generations;
    bool complete = true;
    std::string note;
};

// Vertices of generations [from, to] relative to v0. Negative indices of unrooted
// trees are reached through at most `ancestor_budget` ancestors of v0.
inline GenerationMap generations(const Tree& tree, const Vertex& v0, std::int64_t from, std::int64_t to,
                                 std::int64_t ancestor_budget = 24, std::size_t cap = 1u << 16) {
    if (!tree.contains(v0)) throw std::invalid_argument("vertex not in tree");
    if (from > to) throw std::invalid_argument("empty generation range");
    GenerationMap out;
    // climb to the highest ancestor we are allowed to use
    Vertex top = v0;
    std::int64_t climbed = 0;
    std::int64_t want = std::max<std::int64_t>(ancestor_budget, -from);
    while (climbed < want) {
        auto p = tree.parent(top);
        if (!p) break;
        top = *p;
        ++climbed;
    }
    bool above_complete = !tree.parent(top).has_value() || tree.source().ancestors_single_child(top);
    if (!above_complete) {
        out.complete = false;
        out.note = "ancestors beyond " + tree.name(top) + " not expanded";
    }
    for (std::int64_t g = from; g <= to; ++g) out.generations[g] = {};
    // generations above the top vertex are empty for a root, unexplored otherwise
    bool at_root = !tree.parent(top).has_value();
    for (std::int64_t g = from; g < std::min<std::int64_t>(-climbed, to + 1); ++g) {
        out.generations[g].truncated = !at_root;
        if (!at_root) out.complete = false;
    }

    std::vector<Vertex> level{top};
    bool level_truncated = false;
    for (std::int64_t g = -climbed; g <= to; ++g) {
        if (g >= from) {
            auto& gen = out.generations[g];
            gen.vertices = level;
            gen.truncated = level_truncated || !above_complete;
            if (gen.truncated) out.complete = false;
        }
        if (g == to) break;
        std::vector<Vertex> next;
        for (const auto& v : level) {
            for (const auto& grp : tree.child_groups(v)) {
                std::int64_t n = grp.infinite() ? std::int64_t(cap) : std::int64_t(grp.count);
                if (grp.infinite()) level_truncated = true;
                for (std::int64_t i = 0; i < n; ++i) {
                    if (next.size() >= cap) {
                        level_truncated = true;
                        break;
                    }
                    next.push_back(grp.member(i));
                }
            }
        }
        level = std::move(next);
    }
    return out;
}

// Vertices within undirected distance `radius` of `center`, in breadth-first order.
// Infinite child groups contribute their first `group_cap` members.
struct VertexBall {
    std::vector<Vertex> vertices;
    bool truncated = false;
};

inline VertexBall vertex_ball(const Tree& tree, const Vertex& center, int radius, std::size_t cap = 64,
                              std::int64_t group_cap = 4) {
    VertexBall out;
    std::set<Vertex> seen{center};
    std::vector<Vertex> frontier{center};
    out.vertices.push_back(center);
    for (int d = 0; d < radius && !frontier.empty(); ++d) {
        std::vector<Vertex> next;
        auto visit = [&](const Vertex& w) {
            if (!seen.insert(w).second) return;
            if (out.vertices.size() >= cap) {
                out.truncated = true;
                return;
            }
            out.vertices.push_back(w);
            next.push_back(w);
        };
        for (const auto& v : frontier) {
            if (auto p = tree.parent(v)) visit(*p);
            for (const auto& g : tree.child_groups(v)) {
                std::int64_t n = g.infinite() ? group_cap : std::min<std::int64_t>(std::int64_t(g.count), group_cap);
                if (g.count > double(n)) out.truncated = true;
                for (std::int64_t i = 0; i < n; ++i) visit(g.member(i));
            }
        }
        frontier = std::move(next);
    }
    return out;
}

// V(v) with inherited weights.
inline Tree descendants_subtree(const Tree& tree, const Vertex& v) {
    auto src = std::make_shared<SubtreeSource>(tree.source_ptr(), v);
    return Tree(src, v, tree.mu(v));
}

// V^N(v): generations of V(v) congruent to gen(v) mod N, with inherited weights.
inline Tree power_subtree(const Tree& tree, const Vertex& v, int period) {
    if (period == 1) return descendants_subtree(tree, v);
    auto src = std::make_shared<PowerSubtreeSource>(tree.source_ptr(), v, period);
    return Tree(src, v, tree.mu(v));
}

// V_-^N(v) with the space weight of the ambient tree; the operator weight of the derived
// tree is lambda_-^N(w) = mu_{parent(w)} / mu_w.
inline std::pair<Tree, WeightMap> derived_minus_tree(const Tree& tree, const Vertex& v, int period = 1) {
    auto src = std::make_shared<DerivedMinusSource>(tree.source_ptr(), v, period);
    Tree t(src, v, tree.mu(v));
    return {t, WeightMap(t, WeightRole::Operator)};
}

// lambda(v -> u)
inline double path_weight(const Tree& tree, const Vertex& v, const Vertex& u) { return tree.path_weight(v, u); }

// Space weight mu with mu_{v0} given, conjugating B_lambda to the unweighted shift.
inline WeightMap conjugate_weight(const Tree& tree, const Vertex& v0, double mu_v0) {
    return WeightMap(tree.rebased(v0, mu_v0), WeightRole::Space);
}

// mu_v = lambda(w -> v0) / lambda(w -> v) * mu_v0 with w the nearest common ancestor, evaluated literally.
inline double conjugate_weight_literal(const Tree& tree, const Vertex& v0, double mu_v0, const Vertex& v) {
    Vertex x = v, y = v0;
    std::int64_t dx = tree.source().depth(x), dy = tree.source().depth(y);
    while (dx > dy) x = *tree.parent(x), --dx;
    while (dy > dx) y = *tree.parent(y), --dy;
    while (x != y) {
        x = *tree.parent(x);
        y = *tree.parent(y);
    }
    return tree.path_weight(x, v0) / tree.path_weight(x, v) * mu_v0;
}

}  // namespace treeshift
