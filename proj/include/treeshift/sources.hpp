#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tree.hpp"

namespace treeshift {

class TreeError : public std::runtime_error {
public:
    TreeError(const std::string& msg, std::optional<std::int64_t> vertex = std::nullopt)
        : std::runtime_error(vertex ? msg + " (vertex " + std::to_string(*vertex) + ")" : msg), vertex_(vertex) {}
    std::optional<std::int64_t> vertex() const { return vertex_; }

private:
    std::optional<std::int64_t> vertex_;
};

class UnsupportedStructure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::int64_t checked_index(std::int64_t j, double gamma, std::int64_t i) {
    __int128 v = __int128(j) * __int128(std::int64_t(gamma)) + i;
    if (v > __int128(std::numeric_limits<std::int64_t>::max()))
        throw BudgetExceeded("vertex index overflow");
    return std::int64_t(v);
}

inline double integer_count(double g, const char* what) {
    if (!(g >= 1.0) || g != std::floor(g) || g > 9.0e15)
        throw TreeError(std::string(what) + " must be a positive integer, got " + format_double(g));
    return g;
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
    try {
        std::size_t used = 0;
        std::string t(s);
        long long v = std::stoll(t, &used);
        if (used != t.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

inline std::vector<std::string_view> split_coords(std::string_view s) {
    if (!s.empty() && s.front() == '(' && s.back() == ')') s = s.substr(1, s.size() - 2);
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',' || s[i] == ':') {
            auto tok = s.substr(start, i - start);
            while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
            while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
            out.push_back(tok);
            start = i + 1;
        }
    }
    return out;
}

// sup_n |rule(n) / rule(n+1)| over n >= 0 when the ratio sequence is eventually constant.
inline std::optional<double> sup_inverse_ratio(const Rule& r) {
    auto s = r.ratio_stationary_from();
    if (!s) return std::nullopt;
    double best = 0.0;
    for (std::int64_t n = 0; n <= *s + 1; ++n) best = std::max(best, std::abs(r.at(n) / r.at(n + 1)));
    return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Explicit finite tree. Vertex coordinates: {id, 0, 0}.

struct FiniteEntry {
    std::int64_t id = 0;
    std::optional<std::int64_t> parent;
    double weight = 1.0;
};

class FiniteSource : public TreeSource {
public:
    // Weights are mu (space role) or lambda (operator role; the root's value is ignored).
    FiniteSource(std::vector<FiniteEntry> entries, WeightRole role, bool rooted = true)
        : rooted_(rooted) {
        if (entries.empty()) throw TreeError("empty tree");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (!index_.emplace(entries[i].id, i).second) throw TreeError("duplicate vertex id", entries[i].id);
        }
        std::optional<std::int64_t> root;
        for (const auto& e : entries) {
            if (e.parent) {
                if (*e.parent == e.id) throw TreeError("cycle detected", e.id);
                if (!index_.count(*e.parent)) throw TreeError("dangling parent reference", e.id);
            } else {
                if (root) throw TreeError("multiple roots", e.id);
                root = e.id;
            }
            if (!(e.weight != 0.0) || !std::isfinite(e.weight)) {
                if (!(role == WeightRole::Operator && !e.parent)) throw TreeError("zero or non-finite weight", e.id);
            }
        }
        if (!root) throw TreeError("cycle detected: no vertex without parent", entries.front().id);
        entries_ = std::move(entries);
        children_.resize(entries_.size());
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].parent) children_[index_.at(*entries_[i].parent)].push_back(i);
        // depths; a vertex unreachable from the root lies on a cycle
        depth_.assign(entries_.size(), -1);
        std::vector<std::size_t> stack{index_.at(*root)};
        depth_[stack.back()] = 0;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t c : children_[i]) {
                depth_[c] = depth_[i] + 1;
                stack.push_back(c);
            }
        }
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (depth_[i] < 0) throw TreeError("cycle detected", entries_[i].id);
        root_ = index_.at(*root);
        ratio_.resize(entries_.size(), 1.0);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!entries_[i].parent) continue;
            if (role == WeightRole::Space)
                ratio_[i] = entries_[i].weight / entries_[index_.at(*entries_[i].parent)].weight;
            else
                ratio_[i] = 1.0 / entries_[i].weight;
        }
        root_weight_ = role == WeightRole::Space ? entries_[root_].weight : 1.0;
    }

    double root_weight() const { return root_weight_; }
    std::size_t size() const { return entries_.size(); }
    std::vector<Vertex> vertices() const {
        std::vector<Vertex> out;
        for (const auto& e : entries_) out.push_back({e.id, 0, 0});
        return out;
    }

    Vertex natural_base() const override { return {entries_[root_].id, 0, 0}; }
    bool rooted() const override { return rooted_; }
    bool contains(const Vertex& v) const override { return v.b == 0 && v.c == 0 && index_.count(v.a); }
    std::optional<Vertex> parent(const Vertex& v) const override {
        const auto& e = entries_[at(v)];
        if (!e.parent) return std::nullopt;
        return Vertex{*e.parent, 0, 0};
    }
    std::vector<ChildGroup> children(const Vertex& v) const override {
        std::vector<ChildGroup> out;
        for (std::size_t c : children_[at(v)]) out.push_back(ChildGroup::single({entries_[c].id, 0, 0}));
        return out;
    }
    std::int64_t depth(const Vertex& v) const override { return depth_[at(v)]; }
    double ratio(const Vertex& v) const override { return ratio_[at(v)]; }
    std::string name(const Vertex& v) const override { return std::to_string(v.a); }
    std::optional<Vertex> parse_vertex(std::string_view text) const override {
        if (text == "root") return natural_base();
        auto id = detail::parse_int(text);
        if (!id || !index_.count(*id)) return std::nullopt;
        return Vertex{*id, 0, 0};
    }
    std::string description() const override {
        return "finite tree with " + std::to_string(entries_.size()) + " vertices";
    }
    std::optional<double> operator_bound(double e) const override {
        double best = 0.0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            double acc = 0.0;
            for (std::size_t c : children_[i]) {
                double x = 1.0 / std::abs(ratio_[c]);
                acc = std::isinf(e) ? std::max(acc, x) : acc + std::pow(x, e);
            }
            best = std::max(best, std::isinf(e) ? acc : std::pow(acc, 1.0 / e));
        }
        return best;
    }
    bool has_leaves() const override { return true; }

private:
    std::size_t at(const Vertex& v) const {
        auto it = index_.find(v.a);
        if (it == index_.end() || v.b != 0 || v.c != 0) throw std::invalid_argument("vertex not in tree");
        return it->second;
    }

    bool rooted_;
    std::vector<FiniteEntry> entries_;
    std::unordered_map<std::int64_t, std::size_t> index_;
    std::vector<std::vector<std::size_t>> children_;
    std::vector<std::int64_t> depth_;
    std::vector<double> ratio_;
    std::size_t root_ = 0;
    double root_weight_ = 1.0;
};

// ---------------------------------------------------------------------------
// Symmetric tree given by children-count and operator-weight rules.
// Vertex coordinates {n, j, 0}: generation n, index j; child i of (n, j) is (n+1, j*gamma_n + i).
// Unrooted trees use (0, 0) as base and (-k, 0) for its ancestors.

class SymmetricSource : public TreeSource {
public:
    explicit SymmetricSource(SymmetricSpec spec) : spec_(std::move(spec)) {
        if (spec_.gamma.has_zero_value() || spec_.lambda.has_zero_value())
            throw TreeError("symmetric rules must be nonzero");
        auto sg = spec_.gamma.value_stationary_from();
        auto sl = spec_.lambda.value_stationary_from();
        if (sg && sl) stationary_ = std::max<std::int64_t>(*sg, std::max<std::int64_t>(*sl - 1, 0));
    }

    const SymmetricSpec& spec() const { return spec_; }
    const SymmetricSpec* symmetric_spec() const override { return &spec_; }

    Vertex natural_base() const override { return {0, 0, 0}; }
    bool rooted() const override { return spec_.rooted; }
    bool contains(const Vertex& v) const override {
        if (v.c != 0 || v.b < 0) return false;
        if (spec_.rooted && v.a < 0) return false;
        std::int64_t lo = spec_.rooted ? 0 : v.a;
        if (!spec_.rooted) {
            // ancestors above generation -s have a single child when the left end is free
            if (!spec_.free_left_end()) return true;
            auto s = spec_.effective_gamma_left().value_stationary_from();
            lo = std::min<std::int64_t>(v.a, -(s ? *s : 0) - 1);
        }
        double count = 1.0;
        for (std::int64_t k = lo; k < v.a; ++k) {
            count *= gamma(k);
            if (count > 9.0e18) return true;
        }
        return double(v.b) < count;
    }
    std::optional<Vertex> parent(const Vertex& v) const override {
        if (spec_.rooted && v.a == 0) return std::nullopt;
        std::int64_t g = std::int64_t(gamma(v.a - 1));
        return Vertex{v.a - 1, v.b / g, 0};
    }
    std::vector<ChildGroup> children(const Vertex& v) const override {
        double g = gamma(v.a);
        std::int64_t n = v.a, j = v.b;
        ChildGroup grp;
        grp.kind = ChildGroup::Kind::Identical;
        grp.count = g;
        grp.member = [n, j, g](std::int64_t i) { return Vertex{n + 1, detail::checked_index(j, g, i), 0}; };
        return {grp};
    }
    std::int64_t depth(const Vertex& v) const override { return v.a; }
    double ratio(const Vertex& v) const override { return 1.0 / spec_.lambda_at(v.a); }
    std::string name(const Vertex& v) const override { return std::to_string(v.a) + ":" + std::to_string(v.b); }
    std::optional<Vertex> parse_vertex(std::string_view text) const override {
        if (text == "root" || text == "base" || text == "v0") return natural_base();
        auto parts = detail::split_coords(text);
        if (parts.size() != 2) return std::nullopt;
        auto n = detail::parse_int(parts[0]);
        auto j = detail::parse_int(parts[1]);
        if (!n || !j) return std::nullopt;
        Vertex v{*n, *j, 0};
        if (!contains(v)) return std::nullopt;
        return v;
    }
    std::string description() const override {
        std::string s = std::string(spec_.rooted ? "rooted" : "unrooted") + " symmetric tree, gamma: " +
                        spec_.gamma.to_string() + ", lambda: " + spec_.lambda.to_string();
        if (spec_.gamma_left) s += ", gamma_left: " + spec_.gamma_left->to_string();
        if (spec_.lambda_left) s += ", lambda_left: " + spec_.lambda_left->to_string();
        return s;
    }

    std::optional<ShapeKey> shape(const Vertex& v) const override {
        std::int64_t n = v.a;
        if (stationary_ && n >= *stationary_) n = *stationary_;
        return ShapeKey{1, n, 0, 0};
    }
    std::optional<SymmetricTail> symmetric_tail(const Vertex& v) const override {
        if (v.a < 0) return std::nullopt;
        return SymmetricTail{spec_.gamma, spec_.lambda, v.a};
    }
    std::optional<BranchTail> ancestor_branch(const Vertex& v) const override {
        if (spec_.rooted || !ancestors_single_child(v)) return std::nullopt;
        auto s = spec_.effective_lambda_left().value_stationary_from();
        if (!s) return std::nullopt;
        // lambda_{v.a - k} is constant for k >= head
        const std::int64_t head = std::max<std::int64_t>(v.a, 0) + *s + 1;
        if (head > 4096) return std::nullopt;
        std::vector<double> w{1.0};
        for (std::int64_t k = 0; k < head; ++k) w.push_back(w.back() * std::abs(spec_.lambda_at(v.a - k)));
        const double c = std::abs(spec_.lambda_at(v.a - head));
        const double last = w.back();
        w.pop_back();
        return BranchTail{Rule::table(std::move(w), Rule::geometric(last / std::pow(c, double(head)), c)), 0};
    }
    bool ancestors_single_child(const Vertex& v) const override {
        if (!spec_.rooted && !spec_.free_left_end()) return false;
        if (!spec_.rooted) {
            auto s = spec_.effective_gamma_left().value_stationary_from();
            for (std::int64_t j = 1; j <= (s ? *s : 0) + 1; ++j)
                if (spec_.gamma_at(-j) != 1.0) return false;
        }
        for (std::int64_t k = spec_.rooted ? 0 : 0; k < v.a; ++k)
            if (gamma(k) != 1.0) return false;
        return true;
    }
    std::optional<double> operator_bound(double e) const override {
        // sup_n gamma_n^{1/e} |lambda_{n+1}|
        auto term_growth = [&](const Rule& g, const Rule& l, double shift) {
            Growth gr = l.log_term_growth().shifted(shift);
            if (!std::isinf(e)) gr = gr + g.log_term_growth() * (1.0 / e);
            return gr;
        };
        auto term = [&](std::int64_t n) {
            double x = std::abs(spec_.lambda_at(n + 1));
            return std::isinf(e) ? x : std::pow(gamma(n), 1.0 / e) * x;
        };
        if (term_growth(spec_.gamma, spec_.lambda, 1.0).limit_sign() > 0) return kInf;
        double best = 0.0;
        for (std::int64_t n = 0; n < 4096; ++n) best = std::max(best, term(n));
        if (!spec_.rooted) {
            Rule gl = spec_.effective_gamma_left(), ll = spec_.effective_lambda_left();
            if (term_growth(gl, ll, -1.0).limit_sign() > 0) return kInf;
            for (std::int64_t n = -1; n > -4096; --n) best = std::max(best, term(n));
        }
        return best;
    }

    double gamma(std::int64_t n) const { return detail::integer_count(spec_.gamma_at(n), "children count"); }

private:
    SymmetricSpec spec_;
    std::optional<std::int64_t> stationary_;
};

// ---------------------------------------------------------------------------
// Comb trees. Vertices {n, k, 0}: (n, 0) has children (n+1, 0) and (n+1, 1);
// (n, k), k >= 1, has the single child (n+1, k+1). The full comb has n in Z,
// the half comb n >= 0 and k <= n. Weights mu(n, k) = spine(n) * tooth(k), with
// spine(n) = spine_right(n) for n >= 0 and spine_left(-n-1) for n < 0.

struct CombSpec {
    bool half = false;
    Rule spine_right = Rule::constant(1.0);
    Rule spine_left = Rule::constant(1.0);
    Rule tooth = Rule::constant(1.0);
};

class CombSource : public TreeSource {
public:
    explicit CombSource(CombSpec spec) : spec_(std::move(spec)) {
        auto sr = spec_.spine_right.ratio_stationary_from();
        bool left_matches = spec_.spine_left.value_stationary_from() == std::optional<std::int64_t>(0) &&
                            spec_.spine_right.value_stationary_from() == std::optional<std::int64_t>(0) &&
                            spec_.spine_left.at(0) == spec_.spine_right.at(0);
        if (sr) spine_stationary_ = *sr;
        uniform_spine_ = left_matches;
        tooth_stationary_ = spec_.tooth.ratio_stationary_from();
    }

    const CombSpec& spec() const { return spec_; }

    double log_abs_spine(std::int64_t n) const {
        return n >= 0 ? spec_.spine_right.log_abs_at(n) : spec_.spine_left.log_abs_at(-n - 1);
    }
    double spine_sign(std::int64_t n) const {
        double x = n >= 0 ? spec_.spine_right.at(n) : spec_.spine_left.at(-n - 1);
        return x < 0 ? -1.0 : 1.0;
    }
    double log_abs_mu(const Vertex& v) const { return log_abs_spine(v.a) + spec_.tooth.log_abs_at(v.b); }
    double mu_sign(const Vertex& v) const { return spine_sign(v.a) * (spec_.tooth.at(v.b) < 0 ? -1.0 : 1.0); }

    Vertex natural_base() const override { return {0, 0, 0}; }
    bool rooted() const override { return spec_.half; }
    bool contains(const Vertex& v) const override {
        if (v.c != 0 || v.b < 0) return false;
        if (spec_.half) return v.a >= 0 && v.b <= v.a;
        return true;
    }
    std::optional<Vertex> parent(const Vertex& v) const override {
        if (v.b == 0) {
            if (spec_.half && v.a == 0) return std::nullopt;
            return Vertex{v.a - 1, 0, 0};
        }
        return Vertex{v.a - 1, v.b - 1, 0};
    }
    std::vector<ChildGroup> children(const Vertex& v) const override {
        if (v.b == 0) return {ChildGroup::single({v.a + 1, 0, 0}), ChildGroup::single({v.a + 1, 1, 0})};
        return {ChildGroup::single({v.a + 1, v.b + 1, 0})};
    }
    std::int64_t depth(const Vertex& v) const override { return v.a; }
    double ratio(const Vertex& v) const override {
        Vertex p = *parent(v);
        double l = log_abs_mu(v) - log_abs_mu(p);
        return mu_sign(v) * mu_sign(p) * std::exp(l);
    }
    std::string name(const Vertex& v) const override {
        return "(" + std::to_string(v.a) + "," + std::to_string(v.b) + ")";
    }
    std::optional<Vertex> parse_vertex(std::string_view text) const override {
        if (text == "root" || text == "base" || text == "v0") return natural_base();
        auto parts = detail::split_coords(text);
        if (parts.size() != 2) return std::nullopt;
        auto n = detail::parse_int(parts[0]);
        auto k = detail::parse_int(parts[1]);
        if (!n || !k) return std::nullopt;
        Vertex v{*n, *k, 0};
        if (!contains(v)) return std::nullopt;
        return v;
    }
    std::string description() const override {
        return std::string(spec_.half ? "half comb" : "comb") + ", spine: " + spec_.spine_right.to_string() +
               (spec_.half ? "" : ", spine_left: " + spec_.spine_left.to_string()) +
               ", tooth: " + spec_.tooth.to_string();
    }

    std::optional<ShapeKey> shape(const Vertex& v) const override {
        std::int64_t n = v.a;
        if (uniform_spine_) n = 0;
        else if (spine_stationary_ && n >= *spine_stationary_) n = *spine_stationary_;
        if (v.b == 0) return ShapeKey{2, n, 0, spec_.half ? 1 : 0};
        std::int64_t k = v.b;
        if (tooth_stationary_ && k >= *tooth_stationary_) k = *tooth_stationary_;
        return ShapeKey{3, n, k, 0};
    }
    std::optional<BranchTail> branch_tail(const Vertex& v) const override {
        if (v.b == 0) return std::nullopt;
        std::optional<std::pair<double, double>> gs;
        if (uniform_spine_) gs = std::pair{1.0, 1.0};
        else if (v.a >= 0) gs = spec_.spine_right.geometric_from(v.a);
        auto gt = spec_.tooth.geometric_from(v.b);
        if (!gs || !gt) return std::nullopt;
        return BranchTail{Rule::geometric(1.0, gs->second * gt->second), 0};
    }
    std::optional<double> ancestor_floor(const Vertex& v) const override {
        double best = kInf;
        double lt0 = spec_.tooth.log_abs_at(0);
        for (std::int64_t j = 1; j <= v.b; ++j)
            best = std::min(best, std::exp(log_abs_spine(v.a - j) + spec_.tooth.log_abs_at(v.b - j)));
        std::int64_t top = v.a - v.b - 1;  // spine ancestors (m, 0) with m <= top
        if (spec_.half) {
            for (std::int64_t m = 0; m <= top; ++m) best = std::min(best, std::exp(log_abs_spine(m) + lt0));
        } else {
            for (std::int64_t m = std::max<std::int64_t>(top, -1); m >= 0 && m <= top; --m)
                best = std::min(best, std::exp(log_abs_spine(m) + lt0));
            for (std::int64_t m = 0; m <= top; ++m) best = std::min(best, std::exp(log_abs_spine(m) + lt0));
            std::int64_t first = std::max<std::int64_t>(0, -top - 1);
            best = std::min(best, spec_.spine_left.abs_infimum_from(first) * std::exp(lt0));
        }
        return best / std::exp(log_abs_mu(v));
    }
    std::optional<double> generation_floor(const Vertex& v) const override {
        double best = kInf;
        for (std::int64_t k = 0; k < v.b; ++k) best = std::min(best, std::exp(spec_.tooth.log_abs_at(k)));
        if (spec_.half) {
            for (std::int64_t k = v.b + 1; k <= v.a; ++k) best = std::min(best, std::exp(spec_.tooth.log_abs_at(k)));
        } else {
            best = std::min(best, spec_.tooth.abs_infimum_from(v.b + 1));
        }
        if (std::isinf(best)) return kInf;
        return best / std::exp(spec_.tooth.log_abs_at(v.b));
    }
    std::optional<double> operator_bound(double e) const override {
        auto sup_right = detail::sup_inverse_ratio(spec_.spine_right);
        auto sup_tooth = detail::sup_inverse_ratio(spec_.tooth);
        if (!sup_right || !sup_tooth) return std::nullopt;
        double sup_spine = *sup_right;
        if (!spec_.half) {
            auto sl = spec_.spine_left.ratio_stationary_from();
            if (!sl) return std::nullopt;
            sup_spine = std::max(sup_spine, std::abs(spec_.spine_left.at(0) / spec_.spine_right.at(0)));
            for (std::int64_t j = 1; j <= *sl + 2; ++j)
                sup_spine = std::max(sup_spine, std::abs(spec_.spine_left.at(j) / spec_.spine_left.at(j - 1)));
        }
        double t0 = std::abs(spec_.tooth.at(0) / spec_.tooth.at(1));
        double spine_vertex = std::isinf(e) ? std::max(1.0, t0) : std::pow(1.0 + std::pow(t0, e), 1.0 / e);
        return sup_spine * std::max(spine_vertex, *sup_tooth);
    }

private:
    CombSpec spec_;
    std::optional<std::int64_t> spine_stationary_;
    std::optional<std::int64_t> tooth_stationary_;
    bool uniform_spine_ = false;
};

// ---------------------------------------------------------------------------
// Star-shaped trees: a root with arms. Arm a has `count` members (possibly
// infinitely many); member i is a path of `length` vertices {a, i, d}, d = 1..length,
// with mu = scale(i) * weights(d - 1). The root is {-1, 0, 0}.

struct Arm {
    double count = 1.0;
    Rule scale = Rule::constant(1.0);
    Rule weights = Rule::constant(1.0);
    double length = kInf;
};

class StarSource : public TreeSource {
public:
    StarSource(double root_weight, std::vector<Arm> arms) : root_weight_(root_weight), arms_(std::move(arms)) {
        if (root_weight_ == 0.0) throw TreeError("zero root weight");
        for (const auto& a : arms_) {
            if (a.scale.has_zero_value() || a.weights.has_zero_value()) throw TreeError("arm rules must be nonzero");
            if (!(a.count >= 1.0)) throw TreeError("arm count must be positive");
        }
    }

    double root_weight() const { return root_weight_; }
    const std::vector<Arm>& arms() const { return arms_; }

    Vertex natural_base() const override { return {-1, 0, 0}; }
    bool rooted() const override { return true; }
    bool contains(const Vertex& v) const override {
        if (v == natural_base()) return true;
        if (v.a < 0 || v.a >= std::int64_t(arms_.size())) return false;
        const Arm& arm = arms_[std::size_t(v.a)];
        return v.b >= 0 && double(v.b) < arm.count && v.c >= 1 && double(v.c) <= arm.length;
    }
    std::optional<Vertex> parent(const Vertex& v) const override {
        if (v.a < 0) return std::nullopt;
        if (v.c == 1) return natural_base();
        return Vertex{v.a, v.b, v.c - 1};
    }
    std::vector<ChildGroup> children(const Vertex& v) const override {
        std::vector<ChildGroup> out;
        if (v.a < 0) {
            for (std::size_t a = 0; a < arms_.size(); ++a) {
                const Arm& arm = arms_[a];
                ChildGroup g;
                std::int64_t ai = std::int64_t(a);
                g.member = [ai](std::int64_t i) { return Vertex{ai, i, 1}; };
                g.count = arm.count;
                if (arm.scale.value_stationary_from() == std::optional<std::int64_t>(0)) {
                    g.kind = ChildGroup::Kind::Identical;
                } else {
                    g.kind = ChildGroup::Kind::Scaled;
                    g.scale = arm.scale;
                }
                out.push_back(std::move(g));
            }
            return out;
        }
        if (double(v.c) < arms_[std::size_t(v.a)].length) out.push_back(ChildGroup::single({v.a, v.b, v.c + 1}));
        return out;
    }
    std::int64_t depth(const Vertex& v) const override { return v.a < 0 ? 0 : v.c; }
    double ratio(const Vertex& v) const override {
        if (v.a < 0) return 1.0;
        const Arm& arm = arms_[std::size_t(v.a)];
        if (v.c == 1) return arm.scale.at(v.b) * arm.weights.at(0) / root_weight_;
        double l = arm.weights.log_abs_at(v.c - 1) - arm.weights.log_abs_at(v.c - 2);
        double s = (arm.weights.at(v.c - 1) < 0) != (arm.weights.at(v.c - 2) < 0) ? -1.0 : 1.0;
        return s * std::exp(l);
    }
    std::string name(const Vertex& v) const override {
        if (v.a < 0) return "root";
        return "(" + std::to_string(v.a) + "," + std::to_string(v.b) + "," + std::to_string(v.c) + ")";
    }
    std::optional<Vertex> parse_vertex(std::string_view text) const override {
        if (text == "root") return natural_base();
        auto parts = detail::split_coords(text);
        if (parts.size() != 3) return std::nullopt;
        auto a = detail::parse_int(parts[0]), b = detail::parse_int(parts[1]), c = detail::parse_int(parts[2]);
        if (!a || !b || !c) return std::nullopt;
        Vertex v{*a, *b, *c};
        if (!contains(v)) return std::nullopt;
        return v;
    }
    std::string description() const override {
        std::string s = "star with " + std::to_string(arms_.size()) + " arm group(s)";
        for (const auto& a : arms_)
            s += "; count " + format_double(a.count) + ", weights " + a.weights.to_string() +
                 (std::isinf(a.length) ? "" : ", length " + format_double(a.length));
        return s;
    }
    std::optional<ShapeKey> shape(const Vertex& v) const override {
        if (v.a < 0) return ShapeKey{5, 0, 0, 0};
        const Arm& arm = arms_[std::size_t(v.a)];
        std::int64_t d = v.c;
        auto s = arm.weights.ratio_stationary_from();
        if (std::isinf(arm.length) && s && d - 1 >= *s) d = *s + 1;
        return ShapeKey{4, v.a, d, 0};
    }
    std::optional<BranchTail> branch_tail(const Vertex& v) const override {
        if (v.a < 0) {
            if (arms_.size() == 1 && arms_[0].count == 1.0 && std::isinf(arms_[0].length))
                return std::nullopt;
            return std::nullopt;
        }
        const Arm& arm = arms_[std::size_t(v.a)];
        if (!std::isinf(arm.length)) return std::nullopt;
        return BranchTail{arm.weights, v.c - 1};
    }
    std::optional<double> operator_bound(double e) const override {
        double root = 0.0;
        for (const auto& arm : arms_) {
            double r0 = std::abs(arm.scale.at(0) * arm.weights.at(0) / root_weight_);
            if (std::isinf(e)) {
                double inf_scale = arm.scale.abs_infimum_from(0) / std::abs(arm.scale.at(0));
                root = std::max(root, 1.0 / (r0 * inf_scale));
            } else {
                double series = arm.count == 1.0 ? 1.0 : kInf;
                if (arm.count != 1.0) {
                    if (std::isinf(arm.count)) {
                        auto s = arm.scale.abs_power_series(-e, 0);
                        series = s.finite ? s.value / std::pow(std::abs(arm.scale.at(0)), -e) : kInf;
                    } else {
                        series = 0.0;
                        for (std::int64_t i = 0; i < std::int64_t(arm.count); ++i)
                            series += std::pow(std::abs(arm.scale.at(i) / arm.scale.at(0)), -e);
                    }
                }
                root += series * std::pow(r0, -e);
            }
        }
        double best = std::isinf(e) ? root : std::pow(root, 1.0 / e);
        for (const auto& arm : arms_) {
            auto s = detail::sup_inverse_ratio(arm.weights);
            if (!s) return std::nullopt;
            best = std::max(best, *s);
        }
        return best;
    }
    bool has_leaves() const override {
        return std::any_of(arms_.begin(), arms_.end(), [](const Arm& a) { return !std::isinf(a.length); });
    }

private:
    double root_weight_;
    std::vector<Arm> arms_;
};

// ---------------------------------------------------------------------------
// Finite prefix with rooted symmetric trees attached at some leaves.
// Finite vertices {id, 0, 0}; attached vertices {leaf id, n, j} with n >= 1.

struct Attachment {
    std::int64_t at = 0;
    Rule gamma = Rule::constant(1.0);
    Rule lambda = Rule::constant(1.0);
};

class HybridSource : public TreeSource {
public:
    HybridSource(std::shared_ptr<const FiniteSource> prefix, std::vector<Attachment> attachments)
        : prefix_(std::move(prefix)) {
        for (auto& a : attachments) {
            Vertex leaf{a.at, 0, 0};
            if (!prefix_->contains(leaf)) throw TreeError("attachment at unknown vertex", a.at);
            if (!prefix_->children(leaf).empty()) throw TreeError("attachment at a non-leaf vertex", a.at);
            if (!attach_.emplace(a.at, std::move(a)).second) throw TreeError("duplicate attachment", a.at);
        }
        for (const auto& v : prefix_->vertices())
            if (prefix_->children(v).empty() && !attach_.count(v.a)) bare_leaves_.push_back(v.a);
    }

    double root_weight() const { return prefix_->root_weight(); }
    const std::vector<std::int64_t>& bare_leaves() const { return bare_leaves_; }

    Vertex natural_base() const override { return prefix_->natural_base(); }
    bool rooted() const override { return true; }
    bool contains(const Vertex& v) const override {
        if (v.b == 0) return prefix_->contains(v) && v.c == 0;
        auto it = attach_.find(v.a);
        if (it == attach_.end() || v.b < 0 || v.c < 0) return false;
        double count = 1.0;
        for (std::int64_t k = 0; k < v.b; ++k) {
            count *= it->second.gamma.at(k);
            if (count > 9.0e18) return true;
        }
        return double(v.c) < count;
    }
    std::optional<Vertex> parent(const Vertex& v) const override {
        if (v.b == 0) return prefix_->parent(v);
        if (v.b == 1) return Vertex{v.a, 0, 0};
        std::int64_t g = std::int64_t(gamma(v.a, v.b - 1));
        return Vertex{v.a, v.b - 1, v.c / g};
    }
    std::vector<ChildGroup> children(const Vertex& v) const override {
        if (v.b == 0 && !attach_.count(v.a)) return prefix_->children(v);
        double g = gamma(v.a, v.b);
        std::int64_t a = v.a, n = v.b, j = v.c;
        ChildGroup grp;
        grp.kind = ChildGroup::Kind::Identical;
        grp.count = g;
        grp.member = [a, n, j, g](std::int64_t i) { return Vertex{a, n + 1, detail::checked_index(j, g, i)}; };
        return {grp};
    }
    std::int64_t depth(const Vertex& v) const override { return prefix_->depth({v.a, 0, 0}) + v.b; }
    double ratio(const Vertex& v) const override {
        if (v.b == 0) return prefix_->ratio(v);
        return 1.0 / attach_.at(v.a).lambda.at(v.b);
    }
    std::string name(const Vertex& v) const override {
        if (v.b == 0) return prefix_->name(v);
        return std::to_string(v.a) + "/" + std::to_string(v.b) + ":" + std::to_string(v.c);
    }
    std::optional<Vertex> parse_vertex(std::string_view text) const override {
        auto slash = text.find('/');
        if (slash == std::string_view::npos) return prefix_->parse_vertex(text);
        auto a = detail::parse_int(text.substr(0, slash));
        auto parts = detail::split_coords(text.substr(slash + 1));
        if (!a || parts.size() != 2) return std::nullopt;
        auto n = detail::parse_int(parts[0]), j = detail::parse_int(parts[1]);
        if (!n || !j) return std::nullopt;
        Vertex v{*a, *n, *j};
        if (!contains(v)) return std::nullopt;
        return v;
    }
    std::string description() const override {
        return "hybrid tree: " + prefix_->description() + " with " + std::to_string(attach_.size()) +
               " symmetric attachment(s)";
    }
    std::optional<ShapeKey> shape(const Vertex& v) const override {
        auto it = attach_.find(v.a);
        if (it == attach_.end() || (v.b == 0 && v.c != 0)) return std::nullopt;
        std::int64_t n = v.b;
        auto sg = it->second.gamma.value_stationary_from();
        auto sl = it->second.lambda.value_stationary_from();
        if (sg && sl) n = std::min(n, std::max<std::int64_t>(*sg, std::max<std::int64_t>(*sl - 1, 0)));
        return ShapeKey{6, v.a, n, 0};
    }
    std::optional<SymmetricTail> symmetric_tail(const Vertex& v) const override {
        auto it = attach_.find(v.a);
        if (it == attach_.end()) return std::nullopt;
        return SymmetricTail{it->second.gamma, it->second.lambda, v.b};
    }
    bool has_leaves() const override { return !bare_leaves_.empty(); }

private:
    double gamma(std::int64_t a, std::int64_t n) const {
        return detail::integer_count(attach_.at(a).gamma.at(n), "children count");
    }

    std::shared_ptr<const FiniteSource> prefix_;
    std::map<std::int64_t, Attachment> attach_;
    std::vector<std::int64_t> bare_leaves_;
};

// ---------------------------------------------------------------------------
// The descendant tree V(v) of an ambient tree.

class SubtreeSource : public TreeSource {
public:
    SubtreeSource(std::shared_ptr<const TreeSource> ambient, Vertex top) : amb_(std::move(ambient)), top_(top) {
        if (!amb_->contains(top_)) throw std::invalid_argument("vertex not in tree");
    }

    Vertex natural_base() const override { return top_; }
    bool rooted() const override { return true; }
    bool contains(const Vertex& v) const override {
        if (!amb_->contains(v)) return false;
        std::int64_t d = amb_->depth(v) - amb_->depth(top_);
        if (d < 0) return false;
        Vertex w = v;
        for (std::int64_t i = 0; i < d; ++i) w = *amb_->parent(w);
        return w == top_;
    }
    std::optional<Vertex> parent(const Vertex& v) const override {
        if (v == top_) return std::nullopt;
        return amb_->parent(v);
    }
    std::vector<ChildGroup> children(const Vertex& v) const override { return amb_->children(v); }
    std::int64_t depth(const Vertex& v) const override { return amb_->depth(v); }
    double ratio(const Vertex& v) const override { return amb_->ratio(v); }
    std::string name(const Vertex& v) const override { return amb_->name(v); }
    std::optional<Vertex> parse_vertex(std::string_view t) const override {
        auto v = amb_->parse_vertex(t);
        if (v && !contains(*v)) return std::nullopt;
        return v;
    }
    std::string description() const override { return "descendants of " + amb_->name(top_) + " in " + amb_->description(); }
    std::optional<ShapeKey> shape(const Vertex& v) const override { return amb_->shape(v); }
    std::optional<BranchTail> branch_tail(const Vertex& v) const override { return amb_->branch_tail(v); }
    std::optional<SymmetricTail> symmetric_tail(const Vertex& v) const override { return amb_->symmetric_tail(v); }
    std::optional<double> operator_bound(double e) const override { return amb_->operator_bound(e); }
    bool has_leaves() const override { return amb_->has_leaves(); }

private:
    std::shared_ptr<const TreeSource> amb_;
    Vertex top_;
};

// ---------------------------------------------------------------------------
// The derived rooted tree V_-^N(v): generations of the ambient tree congruent to
// gen(v) mod N, minus the strict descendants of v. Spine s_n = prt^{nN}(v); the
// children of s_n are s_{n+1} and X^N(s_{n+1}) \ {s_n}; any other vertex w has
// children X^N(w). Ratios are mu_w / mu_{parent in V_-^N}.

class DerivedMinusSource : public TreeSource {
public:
    DerivedMinusSource(std::shared_ptr<const TreeSource> ambient, Vertex v, int period)
        : amb_(std::move(ambient)), v_(v), N_(period) {
        if (N_ < 1) throw std::invalid_argument("period must be positive");
        if (!amb_->contains(v_)) throw std::invalid_argument("vertex not in tree");
        spine_.push_back(v_);
    }

    Vertex anchor() const { return v_; }
    int period() const { return N_; }

    // Groups of X^N(w) in the ambient tree.
    std::vector<ChildGroup> power_children(const Vertex& w) const { return flatten(w, N_, nullptr); }

    std::optional<Vertex> spine(std::int64_t n) const {
        std::lock_guard<std::mutex> lock(mu_);
        while (std::int64_t(spine_.size()) <= n && !spine_ended_) {
            Vertex w = spine_.back();
            bool ok = true;
            for (int i = 0; i < N_; ++i) {
                auto p = amb_->parent(w);
                if (!p) {
                    ok = false;
                    break;
                }
                w = *p;
            }
            if (!ok) spine_ended_ = true;
            else spine_.push_back(w);
        }
        if (n < std::int64_t(spine_.size())) return spine_[std::size_t(n)];
        return std::nullopt;
    }

    std::optional<std::int64_t> spine_index(const Vertex& w) const {
        std::int64_t L = amb_->depth(v_) - amb_->depth(w);
        if (L < 0 || L % N_ != 0) return std::nullopt;
        auto s = spine(L / N_);
        if (s && *s == w) return L / N_;
        return std::nullopt;
    }

    Vertex natural_base() const override { return v_; }
    bool rooted() const override { return true; }
    bool contains(const Vertex& w) const override {
        if (!amb_->contains(w)) return false;
        return locate(w).has_value();
    }
    std::optional<Vertex> parent(const Vertex& w) const override {
        if (auto n = spine_index(w)) {
            if (*n == 0) return std::nullopt;
            return spine(*n - 1);
        }
        auto a = ambient_ancestor(w, N_);
        if (!a) throw std::invalid_argument("vertex not in derived tree");
        if (auto n = spine_index(*a)) return spine(*n - 1);
        return a;
    }
    std::vector<ChildGroup> children(const Vertex& w) const override {
        {
            std::lock_guard<std::mutex> lock(memo_mu_);
            if (auto it = memo_.find(w); it != memo_.end()) return it->second;
        }
        auto out = compute_children(w);
        std::lock_guard<std::mutex> lock(memo_mu_);
        if (memo_.size() >= kMemoLimit) memo_.clear();
        memo_.emplace(w, out);
        return out;
    }
    std::int64_t depth(const Vertex& w) const override {
        auto loc = locate(w);
        if (!loc) throw std::invalid_argument("vertex not in derived tree");
        return loc->depth;
    }
    double ratio(const Vertex& w) const override {
        if (auto n = spine_index(w)) {
            if (*n == 0) return 1.0;
            return 1.0 / up_product(*spine(*n - 1), N_);
        }
        // w -> its N-th ambient ancestor a; a is the derived parent unless it lies on the spine
        double r = up_product(w, N_);
        auto a = ambient_ancestor(w, N_);
        if (auto n = spine_index(*a)) r /= up_product(*spine(*n - 1), N_);
        return r;
    }
    std::string name(const Vertex& w) const override { return amb_->name(w); }
    std::optional<Vertex> parse_vertex(std::string_view t) const override {
        auto w = amb_->parse_vertex(t);
        if (w && !contains(*w)) return std::nullopt;
        return w;
    }
    std::string description() const override {
        return "derived tree of period " + std::to_string(N_) + " at " + amb_->name(v_) + " in " + amb_->description();
    }
    std::optional<ShapeKey> shape(const Vertex& w) const override {
        if (spine_index(w)) return std::nullopt;
        auto s = amb_->shape(w);
        if (!s) return std::nullopt;
        return s;
    }
    std::optional<BranchTail> branch_tail(const Vertex& w) const override {
        if (spine_index(w)) return N_ == 1 ? amb_->ancestor_branch(w) : std::nullopt;
        auto t = amb_->branch_tail(w);
        if (!t || N_ == 1) return t;
        auto g = t->weights.geometric_from(t->start);
        if (!g) return std::nullopt;
        return BranchTail{Rule::geometric(1.0, std::pow(g->second, N_)), 0};
    }
    std::optional<SymmetricTail> symmetric_tail(const Vertex& w) const override {
        if (N_ != 1 || spine_index(w)) return std::nullopt;
        return amb_->symmetric_tail(w);
    }
    bool has_leaves() const override { return true; }

private:
    std::vector<ChildGroup> compute_children(const Vertex& w) const {
        if (auto n = spine_index(w)) {
            auto up = spine(*n + 1);
            if (!up) return {};
            std::vector<ChildGroup> out{ChildGroup::single(*up)};
            std::vector<Vertex> path = path_down(*up, w);
            auto rest = flatten(*up, N_, &path);
            out.insert(out.end(), rest.begin(), rest.end());
            return out;
        }
        return flatten(w, N_, nullptr);
    }
    struct Location {
        std::int64_t depth;
    };

    std::optional<Vertex> ambient_ancestor(Vertex w, std::int64_t k) const {
        for (std::int64_t i = 0; i < k; ++i) {
            auto p = amb_->parent(w);
            if (!p) return std::nullopt;
            w = *p;
        }
        return w;
    }

    // Walks N-ancestors of w until the spine is met.
    std::optional<Location> locate(const Vertex& w) const {
        if (auto n = spine_index(w)) return Location{*n};
        std::int64_t diff = amb_->depth(w) - amb_->depth(v_);
        if (((diff % N_) + N_) % N_ != 0) return std::nullopt;
        Vertex x = w;
        for (std::int64_t j = 1;; ++j) {
            auto a = ambient_ancestor(x, N_);
            if (!a) return std::nullopt;
            if (auto n = spine_index(*a)) {
                if (*n == 0) return std::nullopt;  // strict descendant of v
                return Location{j + *n - 1};
            }
            x = *a;
        }
    }

    // mu_w / mu_{prt^k w} in the ambient tree.
    double up_product(Vertex w, int k) const {
        double r = 1.0;
        for (int i = 0; i < k; ++i) {
            r *= amb_->ratio(w);
            w = *amb_->parent(w);
        }
        return r;
    }

    // Path from a child of `top` down to `bottom` (inclusive).
    std::vector<Vertex> path_down(const Vertex& top, const Vertex& bottom) const {
        std::vector<Vertex> path;
        Vertex x = bottom;
        while (x != top) {
            path.push_back(x);
            x = *amb_->parent(x);
        }
        std::reverse(path.begin(), path.end());
        return path;
    }

    std::pair<std::size_t, std::int64_t> position(const std::vector<ChildGroup>& groups, const Vertex& child) const {
        for (std::size_t g = 0; g < groups.size(); ++g) {
            std::int64_t lim = groups[g].infinite() ? 65536 : std::min<std::int64_t>(std::int64_t(groups[g].count), 65536);
            for (std::int64_t i = 0; i < lim; ++i)
                if (groups[g].member(i) == child) return {g, i};
        }
        throw UnsupportedStructure("cannot locate child " + amb_->name(child));
    }

    static std::vector<ChildGroup> remove_member(const ChildGroup& g, std::int64_t m) {
        std::vector<ChildGroup> out;
        if (g.kind == ChildGroup::Kind::Identical) {
            if (g.count > 1.0) {
                ChildGroup h = g;
                h.count = g.count - 1.0;
                auto mem = std::make_shared<const std::function<Vertex(std::int64_t)>>(g.member);
                h.member = [mem, m](std::int64_t i) { return (*mem)(i < m ? i : i + 1); };
                out.push_back(std::move(h));
            }
            return out;
        }
        // scaled or plain: members before m enumerated, the rest shifted
        for (std::int64_t i = 0; i < m; ++i) out.push_back(ChildGroup::single(g.member(i)));
        if (g.count > double(m + 1)) {
            ChildGroup h = g;
            h.count = g.infinite() ? kInf : g.count - double(m + 1);
            auto mem = std::make_shared<const std::function<Vertex(std::int64_t)>>(g.member);
            h.member = [mem, m](std::int64_t i) { return (*mem)(i + m + 1); };
            if (g.scale) {
                Rule base = *g.scale;
                std::vector<double> shifted_head;
                // scale(i) -> scale(i + m + 1), expressed as a table over the stationary prefix
                auto s = base.geometric_from(m + 1);
                if (s) h.scale = Rule::geometric(s->first * std::pow(s->second, double(m + 1)), s->second);
                else throw UnsupportedStructure("cannot shift a non-geometric scale rule");
            }
            out.push_back(std::move(h));
        }
        return out;
    }

    // Groups of X^k(x) in the ambient tree, optionally without the last vertex of `excl`
    // (a path starting at a child of x).
    std::vector<ChildGroup> flatten(const Vertex& x, int k, const std::vector<Vertex>* excl,
                                    std::size_t offset = 0) const {
        auto groups = amb_->children(x);
        std::vector<ChildGroup> out;
        std::optional<std::pair<std::size_t, std::int64_t>> pos;
        if (excl && offset < excl->size()) pos = position(groups, (*excl)[offset]);
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            std::vector<ChildGroup> parts;
            if (pos && pos->first == gi) {
                parts = remove_member(groups[gi], pos->second);
                if (k > 1) {
                    auto inner = flatten((*excl)[offset], k - 1, excl, offset + 1);
                    out.insert(out.end(), inner.begin(), inner.end());
                }
            } else {
                parts.push_back(groups[gi]);
            }
            for (auto& g : parts) {
                if (k == 1) {
                    out.push_back(std::move(g));
                    continue;
                }
                auto deeper = compose(g, k - 1);
                out.insert(out.end(), deeper.begin(), deeper.end());
            }
        }
        return out;
    }

    // Groups of X^k of the members of g.
    std::vector<ChildGroup> compose(const ChildGroup& g, int k) const {
        std::vector<ChildGroup> out;
        if (g.kind == ChildGroup::Kind::Plain || (!g.infinite() && g.count <= 64.0 && g.kind != ChildGroup::Kind::Identical)) {
            for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) {
                auto inner = flatten(g.member(i), k, nullptr);
                out.insert(out.end(), inner.begin(), inner.end());
            }
            return out;
        }
        auto inner0 = flatten(g.member(0), k, nullptr);
        for (std::size_t hi = 0; hi < inner0.size(); ++hi) {
            const ChildGroup& h = inner0[hi];
            if (g.kind == ChildGroup::Kind::Identical) {
                if (h.kind == ChildGroup::Kind::Identical || g.count == 1.0) {
                    ChildGroup c = h;
                    c.count = g.count * h.count;
                    if (g.count == 1.0) {
                        out.push_back(std::move(c));
                        continue;
                    }
                    auto outer = std::make_shared<const std::function<Vertex(std::int64_t)>>(g.member);
                    double hc = h.count;
                    int kk = k;
                    c.member = [this, outer, hc, hi, kk](std::int64_t i) {
                        std::int64_t q = std::int64_t(double(i) / hc);
                        std::int64_t r = i - std::int64_t(double(q) * hc);
                        auto groups = flatten((*outer)(q), kk, nullptr);
                        return groups[hi].member(r);
                    };
                    out.push_back(std::move(c));
                } else if (!g.infinite() && g.count <= 64.0) {
                    for (std::int64_t q = 0; q < std::int64_t(g.count); ++q) {
                        auto groups = flatten(g.member(q), k, nullptr);
                        out.push_back(groups[hi]);
                    }
                } else {
                    throw UnsupportedStructure("nested scaled groups are not supported");
                }
            } else {
                // scaled outer group: only single-member inner groups compose into a scaled group
                if (h.count != 1.0) throw UnsupportedStructure("scaled group with branching members");
                ChildGroup c;
                c.kind = ChildGroup::Kind::Scaled;
                c.count = g.count;
                c.scale = g.scale;
                auto outer = std::make_shared<const std::function<Vertex(std::int64_t)>>(g.member);
                int kk = k;
                c.member = [this, outer, hi, kk](std::int64_t i) {
                    auto groups = flatten((*outer)(i), kk, nullptr);
                    return groups[hi].member(0);
                };
                out.push_back(std::move(c));
            }
        }
        return out;
    }

    static constexpr std::size_t kMemoLimit = 1 << 16;
    mutable std::mutex memo_mu_;
    mutable std::unordered_map<Vertex, std::vector<ChildGroup>, VertexHash> memo_;
    std::shared_ptr<const TreeSource> amb_;
    Vertex v_;
    int N_;
    mutable std::mutex mu_;
    mutable std::vector<Vertex> spine_;
    mutable bool spine_ended_ = false;
};

// ---------------------------------------------------------------------------
// V^N(v): vertices of V(v) in generations congruent to gen(v) mod N, with children X^N(w).

class PowerSubtreeSource : public TreeSource {
public:
    PowerSubtreeSource(std::shared_ptr<const TreeSource> ambient, Vertex top, int period)
        : amb_(ambient), top_(top), N_(period), flat_(std::make_shared<DerivedMinusSource>(ambient, top, period)) {}

    int period() const { return N_; }

    Vertex natural_base() const override { return top_; }
    bool rooted() const override { return true; }
    bool contains(const Vertex& w) const override {
        if (!amb_->contains(w)) return false;
        std::int64_t d = amb_->depth(w) - amb_->depth(top_);
        if (d < 0 || d % N_ != 0) return false;
        Vertex x = w;
        for (std::int64_t i = 0; i < d; ++i) x = *amb_->parent(x);
        return x == top_;
    }
    std::optional<Vertex> parent(const Vertex& w) const override {
        if (w == top_) return std::nullopt;
        Vertex x = w;
        for (int i = 0; i < N_; ++i) x = *amb_->parent(x);
        return x;
    }
    std::vector<ChildGroup> children(const Vertex& w) const override { return flat_->power_children(w); }
    std::int64_t depth(const Vertex& w) const override { return (amb_->depth(w) - amb_->depth(top_)) / N_; }
    double ratio(const Vertex& w) const override {
        if (w == top_) return 1.0;
        double r = 1.0;
        Vertex x = w;
        for (int i = 0; i < N_; ++i) {
            r *= amb_->ratio(x);
            x = *amb_->parent(x);
        }
        return r;
    }
    std::string name(const Vertex& w) const override { return amb_->name(w); }
    std::optional<Vertex> parse_vertex(std::string_view t) const override {
        auto w = amb_->parse_vertex(t);
        if (w && !contains(*w)) return std::nullopt;
        return w;
    }
    std::string description() const override {
        return "generations mod " + std::to_string(N_) + " below " + amb_->name(top_) + " in " + amb_->description();
    }
    std::optional<ShapeKey> shape(const Vertex& w) const override { return amb_->shape(w); }
    std::optional<BranchTail> branch_tail(const Vertex& w) const override {
        auto t = amb_->branch_tail(w);
        if (!t || N_ == 1) return t;
        auto g = t->weights.geometric_from(t->start);
        if (!g) return std::nullopt;
        return BranchTail{Rule::geometric(1.0, std::pow(g->second, N_)), 0};
    }
    std::optional<SymmetricTail> symmetric_tail(const Vertex& w) const override {
        if (N_ != 1) return std::nullopt;
        return amb_->symmetric_tail(w);
    }
    bool has_leaves() const override { return amb_->has_leaves(); }

private:
    std::shared_ptr<const TreeSource> amb_;
    Vertex top_;
    int N_;
    std::shared_ptr<const DerivedMinusSource> flat_;
};

// ---------------------------------------------------------------------------
// Factories for the standard examples.

inline Tree make_symmetric_tree(SymmetricSpec spec) { return Tree(std::make_shared<SymmetricSource>(std::move(spec))); }

inline Tree make_rooted_symmetric(Rule gamma, Rule lambda) {
    return make_symmetric_tree(SymmetricSpec{std::move(gamma), std::move(lambda), true, std::nullopt, std::nullopt});
}

inline Tree make_unrooted_symmetric(Rule gamma, Rule lambda, std::optional<Rule> gamma_left = std::nullopt,
                                    std::optional<Rule> lambda_left = std::nullopt) {
    return make_symmetric_tree(
        SymmetricSpec{std::move(gamma), std::move(lambda), false, std::move(gamma_left), std::move(lambda_left)});
}

inline Tree make_comb(CombSpec spec) {
    auto src = std::make_shared<CombSource>(std::move(spec));
    double w = src->mu_sign({0, 0, 0}) * std::exp(src->log_abs_mu({0, 0, 0}));
    return Tree(src, w);
}

inline Tree make_star(double root_weight, std::vector<Arm> arms) {
    return Tree(std::make_shared<StarSource>(root_weight, std::move(arms)), root_weight);
}

inline Tree make_finite(std::vector<FiniteEntry> entries, WeightRole role, bool rooted = true) {
    auto src = std::make_shared<FiniteSource>(std::move(entries), role, rooted);
    double w = src->root_weight();
    return Tree(src, w);
}

}  // namespace treeshift
