#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "numeric.hpp"
#include "rule.hpp"

namespace treeshift {

class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stable vertex identifier. Sources decide what the coordinates mean
// (document id, (generation, index), comb coordinates, ...).
struct Vertex {
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::int64_t c = 0;

    friend auto operator<=>(const Vertex&, const Vertex&) = default;
};

struct VertexHash {
    std::size_t operator()(const Vertex& v) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (std::int64_t x : {v.a, v.b, v.c}) {
            h ^= std::uint64_t(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h *= 1099511628211ull;
        }
        return std::size_t(h);
    }
};

// Children of a vertex come in groups. A group is either
//  - identical: `count` members with equal ratio and isomorphic weighted subtrees,
//  - scaled: countably or finitely many members whose subtrees are isomorphic and whose
//    ratios are ratio(member 0) * |scale(i) / scale(0)|,
//  - plain: finitely many unrelated members, enumerated one by one.
struct ChildGroup {
    enum class Kind { Identical, Scaled, Plain };

    Kind kind = Kind::Identical;
    double count = 1.0;  // kInf for countably many
    std::function<Vertex(std::int64_t)> member;
    std::optional<Rule> scale;

    static ChildGroup single(Vertex v) {
        return {Kind::Identical, 1.0, [v](std::int64_t) { return v; }, std::nullopt};
    }
    bool infinite() const { return std::isinf(count); }
};

// The descendant tree V(v) is one branch v = v_0, v_1, ... with
// |mu_{v_n}| / |mu_v| = |weights(start + n) / weights(start)|.
struct BranchTail {
    Rule weights;
    std::int64_t start = 0;
};

// V(v) is a rooted symmetric tree: v sits in generation `start`, vertices of
// generation n have gamma(n) children, each with operator weight lambda(n + 1).
struct SymmetricTail {
    Rule gamma;
    Rule lambda;
    std::int64_t start = 0;
};

// Rules of a symmetric tree, for closed-form classification.
struct SymmetricSpec {
    Rule gamma;
    Rule lambda;
    bool rooted = true;
    // Generations -1, -2, ... of unrooted trees: gamma_{-j} = gamma_left(j - 1), likewise lambda.
    // Absent left rules repeat the generation-0 values.
    std::optional<Rule> gamma_left;
    std::optional<Rule> lambda_left;

    bool free_left_end() const {
        if (rooted) return false;
        if (!gamma_left) return gamma.at(0) == 1.0;
        auto s = gamma_left->value_stationary_from();
        return s.has_value() && gamma_left->at(*s) == 1.0;
    }
    double gamma_at(std::int64_t n) const {
        if (n >= 0) return gamma.at(n);
        return gamma_left ? gamma_left->at(-n - 1) : gamma.at(0);
    }
    double lambda_at(std::int64_t n) const {
        if (n >= 0) return lambda.at(n);
        return lambda_left ? lambda_left->at(-n - 1) : lambda.at(0);
    }
    Rule effective_lambda_left() const { return lambda_left ? *lambda_left : Rule::constant(lambda.at(0)); }
    Rule effective_gamma_left() const { return gamma_left ? *gamma_left : Rule::constant(gamma.at(0)); }
};

// Key identifying the weighted structure of V(v) up to scaling of the weight.
using ShapeKey = std::array<std::int64_t, 4>;

// Generator of a weighted directed tree. All weights are stored in ratio form
// ratio(v) = mu_v / mu_parent(v) = 1 / lambda_v.
class TreeSource {
public:
    virtual ~TreeSource() = default;

    virtual Vertex natural_base() const = 0;
    virtual bool rooted() const = 0;
    virtual bool contains(const Vertex& v) const = 0;
    virtual std::optional<Vertex> parent(const Vertex& v) const = 0;
    virtual std::vector<ChildGroup> children(const Vertex& v) const = 0;
    virtual std::int64_t depth(const Vertex& v) const = 0;
    virtual double ratio(const Vertex& v) const = 0;
    virtual std::string name(const Vertex& v) const = 0;
    virtual std::optional<Vertex> parse_vertex(std::string_view text) const = 0;
    virtual std::string description() const = 0;

    virtual std::optional<ShapeKey> shape(const Vertex&) const { return std::nullopt; }
    virtual std::optional<BranchTail> branch_tail(const Vertex&) const { return std::nullopt; }
    virtual std::optional<SymmetricTail> symmetric_tail(const Vertex&) const { return std::nullopt; }
    virtual const SymmetricSpec* symmetric_spec() const { return nullptr; }
    // Every strict ancestor of v has exactly one child.
    virtual bool ancestors_single_child(const Vertex&) const { return false; }
    // |mu| along v, prt v, prt^2 v, ... when every strict ancestor has a single child.
    virtual std::optional<BranchTail> ancestor_branch(const Vertex&) const { return std::nullopt; }
    // inf_{n >= 1} |mu(prt^n v)| / |mu_v| and inf_{u in gen(v), u != v} |mu_u| / |mu_v|, when certified.
    virtual std::optional<double> ancestor_floor(const Vertex&) const { return std::nullopt; }
    virtual std::optional<double> generation_floor(const Vertex&) const { return std::nullopt; }
    // Certified sup_v (sum_{u in X(v)} |ratio(u)|^{-e})^{1/e}, e = p* (max for e = inf).
    virtual std::optional<double> operator_bound(double) const { return std::nullopt; }
    // Whether the tree may contain leaves.
    virtual bool has_leaves() const { return false; }
};

class Tree {
public:
    explicit Tree(std::shared_ptr<const TreeSource> src, double base_weight = 1.0)
        : src_(std::move(src)), base_(src_->natural_base()), base_weight_(base_weight) {}
    Tree(std::shared_ptr<const TreeSource> src, Vertex base, double base_weight)
        : src_(std::move(src)), base_(base), base_weight_(base_weight) {
        if (!src_->contains(base_)) throw std::invalid_argument("base vertex not in tree");
    }

    const TreeSource& source() const { return *src_; }
    std::shared_ptr<const TreeSource> source_ptr() const { return src_; }
    Vertex base() const { return base_; }
    double base_weight() const { return base_weight_; }
    bool rooted() const { return src_->rooted(); }

    bool contains(const Vertex& v) const { return src_->contains(v); }
    std::optional<Vertex> parent(const Vertex& v) const { return src_->parent(v); }
    std::vector<ChildGroup> child_groups(const Vertex& v) const { return src_->children(v); }
    double ratio(const Vertex& v) const { return src_->ratio(v); }
    double lambda(const Vertex& v) const { return 1.0 / src_->ratio(v); }
    std::string name(const Vertex& v) const { return src_->name(v); }

    // Generation of v relative to the base vertex.
    std::int64_t level(const Vertex& v) const { return src_->depth(v) - src_->depth(base_); }

    std::optional<Vertex> root() const {
        if (!rooted()) return std::nullopt;
        Vertex v = base_;
        while (auto p = src_->parent(v)) v = *p;
        return v;
    }

    bool is_leaf(const Vertex& v) const { return src_->children(v).empty(); }

    // Explicit child list; throws BudgetExceeded when there are more than `limit` children.
    std::vector<Vertex> children(const Vertex& v, std::size_t limit = 1u << 20) const {
        std::vector<Vertex> out;
        for (const auto& g : src_->children(v)) {
            if (g.infinite() || out.size() + std::size_t(g.count) > limit)
                throw BudgetExceeded("too many children at " + name(v));
            for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) out.push_back(g.member(i));
        }
        return out;
    }

    std::optional<Vertex> ancestor(Vertex v, std::int64_t n) const {
        for (std::int64_t i = 0; i < n; ++i) {
            auto p = src_->parent(v);
            if (!p) return std::nullopt;
            v = *p;
        }
        return v;
    }

    bool is_descendant(const Vertex& u, const Vertex& v) const {
        std::int64_t d = src_->depth(u) - src_->depth(v);
        if (d < 0) return false;
        auto a = ancestor(u, d);
        return a && *a == v;
    }

    // log|lambda(v -> u)| for u in V(v).
    double log_abs_path_weight(const Vertex& v, const Vertex& u) const {
        double acc = 0.0;
        Vertex w = u;
        std::int64_t d = src_->depth(u) - src_->depth(v);
        if (d < 0) throw std::invalid_argument(name(u) + " is not a descendant of " + name(v));
        for (std::int64_t i = 0; i < d; ++i) {
            acc -= std::log(std::abs(src_->ratio(w)));
            auto p = src_->parent(w);
            if (!p) throw std::invalid_argument(name(u) + " is not a descendant of " + name(v));
            w = *p;
        }
        if (w != v) throw std::invalid_argument(name(u) + " is not a descendant of " + name(v));
        return acc;
    }

    // lambda(v -> u) = product of lambda over the path from v to u, excluding v.
    double path_weight(const Vertex& v, const Vertex& u) const {
        double acc = 0.0, sign = 1.0, direct = 1.0;
        bool direct_ok = true;
        Vertex w = u;
        std::int64_t d = src_->depth(u) - src_->depth(v);
        if (d < 0) throw std::invalid_argument(name(u) + " is not a descendant of " + name(v));
        for (std::int64_t i = 0; i < d; ++i) {
            double lam = 1.0 / src_->ratio(w);
            acc += std::log(std::abs(lam));
            if (lam < 0) sign = -sign;
            direct *= lam;
            if (!(std::abs(direct) < 1e300 && std::abs(direct) > 1e-300)) direct_ok = false;
            auto p = src_->parent(w);
            if (!p) throw std::invalid_argument(name(u) + " is not a descendant of " + name(v));
            w = *p;
        }
        if (w != v) throw std::invalid_argument(name(u) + " is not a descendant of " + name(v));
        return direct_ok ? direct : sign * std::exp(acc);
    }

    // log|mu_v| and sign of mu_v, walking to the common ancestor with the base vertex.
    std::pair<double, double> log_abs_mu_and_sign(const Vertex& v) const {
        double acc = std::log(std::abs(base_weight_));
        double sign = base_weight_ < 0 ? -1.0 : 1.0;
        Vertex x = v, y = base_;
        std::int64_t dx = src_->depth(x), dy = src_->depth(y);
        auto step = [&](Vertex& w, std::int64_t& dw, double dir) {
            double r = src_->ratio(w);
            acc += dir * std::log(std::abs(r));
            if (r < 0) sign = -sign;
            auto p = src_->parent(w);
            if (!p) throw std::invalid_argument("vertices " + name(v) + " and base are not connected");
            w = *p;
            --dw;
        };
        while (dx > dy) step(x, dx, 1.0);
        while (dy > dx) step(y, dy, -1.0);
        while (x != y) {
            step(x, dx, 1.0);
            step(y, dy, -1.0);
        }
        return {acc, sign};
    }

    // Absolute space weight mu_v.
    double mu(const Vertex& v) const {
        auto [l, s] = log_abs_mu_and_sign(v);
        return s * std::exp(l);
    }

    Tree rebased(const Vertex& v) const { return Tree(src_, v, mu(v)); }
    Tree rebased(const Vertex& v, double weight) const { return Tree(src_, v, weight); }
    Tree scaled(double t) const { return Tree(src_, base_, base_weight_ * t); }

private:
    std::shared_ptr<const TreeSource> src_;
    Vertex base_;
    double base_weight_;
};

enum class WeightRole { Space, Operator };

// Per-vertex weight view of a tree: mu (space weight) or lambda (operator weight).
class WeightMap {
public:
    WeightMap(Tree tree, WeightRole role) : tree_(std::move(tree)), role_(role) {}

    WeightRole role() const { return role_; }
    const Tree& tree() const { return tree_; }

    double at(const Vertex& v) const {
        if (role_ == WeightRole::Space) return tree_.mu(v);
        if (!tree_.parent(v)) throw std::invalid_argument("operator weight undefined at a root");
        return tree_.lambda(v);
    }

private:
    Tree tree_;
    WeightRole role_;
};

}  // namespace treeshift
