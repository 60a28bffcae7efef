#pragma once

#include <algorithm>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flows.hpp"

namespace treeshift {

enum class Answer { Yes, No, Unknown };

inline const char* to_string(Answer a) {
    switch (a) {
        case Answer::Yes: return "Yes";
        case Answer::No: return "No";
        case Answer::Unknown: return "Unknown";
    }
    return "Unknown";
}

enum class SpaceFamily { Lp, C0 };

// l^p(V, mu) or c_0(V, mu); the weight mu lives in the tree (ratio form).
struct SpaceSpec {
    SpaceFamily family = SpaceFamily::Lp;
    double p = 2.0;

    static SpaceSpec ell(double p) { return {SpaceFamily::Lp, p}; }
    static SpaceSpec c0() { return {SpaceFamily::C0, kInf}; }

    void validate() const {
        if (family == SpaceFamily::Lp && !(p >= 1.0 && p < kInf)) throw std::invalid_argument("l^p needs 1 <= p < inf");
    }
    // exponent of the minimal flow problem attached to the space
    Exponent flow_exponent() const { return family == SpaceFamily::C0 ? Exponent::infinity() : Exponent(p); }
    // exponent e of sum_{u in X(v)} |mu_u|^{-e} in the definedness condition
    double dual_exponent() const { return family == SpaceFamily::C0 ? 1.0 : Exponent(p).conjugate(); }
    std::string name() const { return family == SpaceFamily::C0 ? "c0" : "l^" + format_double(p); }
};

struct Verdict {
    Answer answer = Answer::Unknown;
    std::string theorem;
    std::string certificate;
    std::string reason;
    std::vector<std::pair<std::string, double>> quantities;
    std::vector<std::string> vertices;

    void add(std::string name, double value) { quantities.emplace_back(std::move(name), value); }
    bool yes() const { return answer == Answer::Yes; }
    bool no() const { return answer == Answer::No; }
};

// ---------------------------------------------------------------------------
// Shifts

class ShiftError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// B^n f for a finitely supported f. Weighted: (Bf)(v) = sum lambda_u f(u); unweighted: sum f(u).
inline Sparse apply_shift(const Tree& tree, ShiftForm form, const Sparse& f, int n, const Budget& budget = {}) {
    if (n < 0) throw std::invalid_argument("shift power must be nonnegative");
    Sparse cur = f;
    for (int k = 0; k < n; ++k) {
        Sparse next;
        for (const auto& [u, x] : cur) {
            if (x == 0.0) continue;
            if (!tree.contains(u)) throw ShiftError("vertex " + tree.name(u) + " is not in the tree");
            auto p = tree.parent(u);
            if (!p) continue;
            next[*p] += form == ShiftForm::Weighted ? tree.lambda(u) * x : x;
        }
        if (std::int64_t(next.size()) > budget.vertices) throw ShiftError("support exceeds the vertex budget");
        cur = std::move(next);
    }
    return cur;
}

// (B^n g)(v) for a lazily evaluated sequence; nullopt when X^n(v) is infinite or too large.
inline std::optional<double> shifted_value(const Flow& g, const Vertex& v, int n, ShiftForm form,
                                           std::size_t cap = 1u << 16) {
    const Tree& t = g.tree();
    double sum = 0.0;
    std::size_t visited = 0;
    bool ok = true;
    std::function<void(const Vertex&, int, double)> walk = [&](const Vertex& w, int left, double weight) {
        if (!ok) return;
        if (left == 0) {
            sum += weight * g(w);
            return;
        }
        for (const auto& grp : t.child_groups(w)) {
            if (grp.infinite() || grp.count > 4096.0 || ++visited > cap) {
                ok = false;
                return;
            }
            for (std::int64_t i = 0; i < std::int64_t(grp.count); ++i) {
                Vertex u = grp.member(i);
                walk(u, left - 1, form == ShiftForm::Weighted ? weight * t.lambda(u) : weight);
            }
        }
    };
    walk(v, n, 1.0);
    if (!ok) return std::nullopt;
    return sum;
}

// max |(B^N g)(v) - g(v)| over the given vertices.
inline ResidualReport periodic_residual(const Flow& g, int period, const std::vector<Vertex>& vertices, double tol = 1e-12) {
    ResidualReport rep;
    rep.tolerance = tol;
    for (const auto& v : vertices) {
        auto s = shifted_value(g, v, period, g.form());
        if (!s) {
            ++rep.skipped;
            continue;
        }
        ++rep.checked;
        double r = std::abs(*s - g(v));
        if (r > rep.max_residual) {
            rep.max_residual = r;
            rep.worst = v;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Definedness and boundedness

namespace detail {

// log of |mu_v| (sum_{u in X(v)} |mu_u|^{-e})^{1/e}, the max for e = inf; +inf when divergent.
inline double log_child_norm(const Tree& t, const Vertex& v, double e) {
    double acc = -kInf;
    for (const auto& g : t.child_groups(v)) {
        if (g.count <= 0.0) continue;
        double l0 = -std::log(std::abs(t.ratio(g.member(0))));  // log |mu_v / mu_u0|
        if (g.kind == ChildGroup::Kind::Plain) {
            for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) {
                double li = -std::log(std::abs(t.ratio(g.member(i))));
                acc = std::isinf(e) ? std::max(acc, li) : log_add(acc, e * li);
            }
            continue;
        }
        if (g.kind == ChildGroup::Kind::Identical || !g.scale) {
            if (std::isinf(e)) acc = std::max(acc, l0);
            else if (g.infinite()) return kInf;
            else acc = log_add(acc, std::log(g.count) + e * l0);
            continue;
        }
        const Rule& s = *g.scale;
        double ls0 = s.log_abs_at(0);
        if (std::isinf(e)) {
            double inf = g.infinite() ? s.abs_infimum_from(0) : kInf;
            if (!g.infinite())
                for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) inf = std::min(inf, std::abs(s.at(i)));
            if (inf == 0.0) return kInf;
            acc = std::max(acc, l0 + ls0 - std::log(inf));
        } else if (g.infinite()) {
            auto ser = s.abs_power_series(-e, 0);
            if (!ser.finite) return kInf;
            acc = log_add(acc, std::log(ser.value) + e * (l0 + ls0));
        } else {
            for (std::int64_t i = 0; i < std::int64_t(g.count); ++i)
                acc = log_add(acc, e * (l0 + ls0 - s.log_abs_at(i)));
        }
    }
    if (acc == -kInf) return -kInf;
    return std::isinf(e) ? acc : acc / e;
}

inline std::vector<Vertex> default_sample(const Tree& tree, const Budget& budget) {
    return vertex_ball(tree, tree.base(), budget.sample_depth, std::size_t(budget.sample_size)).vertices;
}

}  // namespace detail

struct OperatorCheck {
    Verdict defined;
    Verdict bounded;
    double sampled_sup = 0.0;  // sup over sampled vertices
    std::optional<double> bound;  // certified sup over the whole tree
};

inline OperatorCheck operator_defined_check(const Tree& tree, const SpaceSpec& space, const Budget& budget = {},
                                            std::optional<std::vector<Vertex>> sample = std::nullopt) {
    space.validate();
    const double e = space.dual_exponent();
    std::vector<Vertex> vs = sample ? *sample : detail::default_sample(tree, budget);
    OperatorCheck out;
    out.defined.theorem = "definedness: sum of |mu_u|^-e over the children is finite";
    out.bounded.theorem = "boundedness: sup_v |mu_v| (sum_u |mu_u|^-e)^(1/e) is finite";
    out.defined.add("exponent e", e);
    std::optional<Vertex> bad;
    double sup = 0.0;
    for (const auto& v : vs) {
        double l = detail::log_child_norm(tree, v, e);
        if (l == kInf) {
            bad = v;
            break;
        }
        sup = std::max(sup, safe_exp(l));
    }
    out.sampled_sup = sup;
    for (const auto& v : vs) out.defined.vertices.push_back(tree.name(v));
    if (bad) {
        out.defined.answer = Answer::No;
        out.defined.certificate = "divergent child sum at " + tree.name(*bad);
        out.defined.vertices = {tree.name(*bad)};
        out.bounded = out.defined;
        out.bounded.theorem = "boundedness requires definedness";
        return out;
    }
    out.defined.answer = Answer::Yes;
    out.defined.certificate = "finite child sums on " + std::to_string(vs.size()) + " sampled vertices";
    out.defined.add("sampled sup", sup);

    out.bound = tree.source().operator_bound(e);
    out.bounded.vertices = out.defined.vertices;
    out.bounded.add("sampled sup", sup);
    if (out.bound && std::isfinite(*out.bound)) {
        out.bounded.answer = Answer::Yes;
        out.bounded.certificate = "declared rules bound the norm by " + format_double(*out.bound);
        out.bounded.add("operator bound", *out.bound);
    } else if (out.bound) {
        out.bounded.answer = Answer::No;
        out.bounded.certificate = "declared rules make the per-vertex norms unbounded";
    } else {
        out.bounded.answer = Answer::Unknown;
        out.bounded.reason = "no rule certificate for the uniform bound";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Periodic points and universal fixed points

// g = sum_n f chi_{gen_{nN}}, generations counted from v.
inline Flow periodic_point_from_flow(const Flow& f, const Vertex& v, int period) {
    if (period < 1) throw std::invalid_argument("period must be positive");
    if (period == 1) return f;
    const std::int64_t d0 = f.tree().source().depth(v);
    auto gen = [f, d0, period](const Flow&, const Vertex& w) -> double {
        std::int64_t d = f.tree().source().depth(w) - d0;
        if (((d % period) + period) % period != 0) return 0.0;
        return f(w);
    };
    Flow::Traits tr = f.traits();
    tr.note = "restriction to generations mod " + std::to_string(period);
    return Flow(f.tree(), f.form(), v, gen, f.domains(), tr);
}

struct PeriodicPoint {
    Flow point;
    UnrootedFlow parts;
    BoundEstimate distance;  // ||g - e_v|| in the space norm
};

// Minimal-energy periodic point of period N with g(v) = 1, assembled from the minimal
// flows on V^N(v) and V_-^N(v).
inline PeriodicPoint periodic_point(const Tree& tree, const Vertex& v, int period, const SpaceSpec& space,
                                    const Budget& budget = {}) {
    space.validate();
    Exponent p = space.flow_exponent();
    UnrootedFlow u = unrooted_unit_flow(tree, v, p, budget, period);
    BoundEstimate d;
    d.tolerance = budget.tol;
    const BoundEstimate& cp = u.plus.off_root;
    const BoundEstimate& cm = u.minus.off_root;
    auto comb = [&](double a, double b) {
        if (p.is_infinite()) return std::max(a, b);
        double pw = p.value();
        return std::pow(std::pow(a, pw) + std::pow(b, pw), 1.0 / pw);
    };
    d.value = comb(cp.value, cm.value);
    d.upper = comb(cp.upper, cm.upper);
    d.status = worse(cp.status, cm.status);
    if (!u.plus.available || !u.minus.available) {
        d.value = d.upper = kInf;
        d.status = Status::CertifiedInfinite;
    }
    d.certificate = "c(V^N(v)) and c(V_-^N(v)) combined in the space norm";
    return {u.flow, u, d};
}

struct FixedPointCandidate {
    Flow flow;    // fixed point with value 1 at its vertex
    double norm;  // its norm in the space, or an upper bound
};

using FixedPointProvider = std::function<std::optional<FixedPointCandidate>(const Vertex&)>;

// Fixed points from the minimal unit flow construction (period 1).
inline FixedPointProvider minimal_fixed_points(const Tree& tree, const SpaceSpec& space, const Budget& budget = {}) {
    return [tree, space, budget](const Vertex& v) -> std::optional<FixedPointCandidate> {
        Exponent p = space.flow_exponent();
        if (tree.rooted() && !tree.parent(v)) {
            MinimalFlow m = minimal_unit_flow(tree, v, p, budget);
            if (!m.available) return std::nullopt;
            return FixedPointCandidate{m.flow, m.norm.upper < kInf ? m.norm.upper : m.norm.value};
        }
        UnrootedFlow u = unrooted_unit_flow(tree, v, p, budget, 1);
        if (!u.plus.available || !u.minus.available) return std::nullopt;
        double e = u.energy.upper < kInf ? u.energy.upper : u.energy.value;
        double norm = p.is_infinite() || p.is_one() ? e : std::pow(e, 1.0 / p.value());
        return FixedPointCandidate{u.flow, norm};
    };
}

// The fixed points f_m of the full comb: 1 on (n, 0) and -1 on (n, n - m + 1) for n >= m.
inline FixedPointCandidate comb_fixed_point(const Tree& comb, std::int64_t m, const SpaceSpec& space) {
    auto* src = dynamic_cast<const CombSource*>(&comb.source());
    if (!src || comb.rooted()) throw std::invalid_argument("comb fixed points live on the full comb");
    auto gen = [m](const Flow&, const Vertex& w) -> double {
        if (w.a < m) return 0.0;
        if (w.b == 0) return 1.0;
        return w.b == w.a - m + 1 ? -1.0 : 0.0;
    };
    Flow::Traits tr;
    tr.note = "comb fixed point";
    Flow f(comb, ShiftForm::Unweighted, Vertex{m, 0, 0}, gen, {}, tr);
    // norm: sum over n >= m of |mu(n, 0)|^p + |mu(n, n - m + 1)|^p, relative to mu at the base
    double lb = comb.log_abs_mu_and_sign(comb.base()).first;
    double pw = space.family == SpaceFamily::C0 ? kInf : space.p;
    double acc = 0.0;
    bool converged = false;
    for (std::int64_t n = m; n < m + 1'000'000; ++n) {
        double a = std::exp(src->log_abs_mu({n, 0, 0}) - lb);
        double b = std::exp(src->log_abs_mu({n, n - m + 1, 0}) - lb);
        double term = std::isinf(pw) ? std::max(a, b) : std::pow(a, pw) + std::pow(b, pw);
        if (std::isinf(pw)) acc = std::max(acc, term);
        else acc += term;
        if (n > m + 64 && term <= 1e-18 * acc) {
            converged = true;
            break;
        }
    }
    double norm = !converged ? kInf : (std::isinf(pw) ? acc : std::pow(acc, 1.0 / pw));
    return {f, norm};
}

struct UniversalFixedPoint {
    Flow flow;
    std::vector<Vertex> order;
    std::vector<double> coefficients;
    ResidualReport residual;
    double min_abs = 0.0;  // min |f(v_k)| over the enumerated vertices
    Answer answer = Answer::Unknown;
    std::string note;
};

// f = sum_n a_n f_n with the rescaling of the fixed point argument: ||a_n f_n|| < 2^-n,
// |a_n f_n(v_k)| < 2^-(n-k+1) |S_k(v_k)| for k < n, and S_n(v_n) != 0.
inline UniversalFixedPoint universal_fixed_point(const Tree& tree, const std::vector<Vertex>& order,
                                                 const FixedPointProvider& provider,
                                                 const std::vector<Vertex>& check, double tol = 1e-12) {
    std::vector<Flow> parts;
    std::vector<double> coef;
    std::vector<double> s_at;  // S_k(v_k)
    UniversalFixedPoint out{Flow(tree, ShiftForm::Unweighted, tree.base(), [](const Flow&, const Vertex&) { return 0.0; }),
                            order, {}, {}, 0.0, Answer::Unknown, {}};
    auto partial = [&](const Vertex& w, std::size_t upto) {
        double s = 0.0;
        for (std::size_t i = 0; i < upto; ++i) s += coef[i] * parts[i](w);
        return s;
    };
    for (std::size_t n = 0; n < order.size(); ++n) {
        const Vertex& vn = order[n];
        auto cand = provider(vn);
        if (!cand) {
            out.note = "no fixed point through " + tree.name(vn);
            return out;
        }
        double a = cand->flow(vn);
        if (a == 0.0) {
            out.note = "supplied fixed point vanishes at " + tree.name(vn);
            return out;
        }
        double bound = std::ldexp(1.0, -int(n)) / std::max(cand->norm, 1e-300);
        for (std::size_t k = 0; k < n; ++k) {
            double x = std::abs(cand->flow(order[k]));
            if (x > 0.0) bound = std::min(bound, std::ldexp(std::abs(s_at[k]), -int(n - k + 1)) / x);
        }
        double prev = partial(vn, n);
        double alpha = 0.5 * bound;
        for (int tries = 0; tries < 60 && std::abs(prev + alpha * a) <= 1e-300 + 1e-12 * std::abs(prev); ++tries) alpha *= 0.5;
        if (std::abs(prev + alpha * a) == 0.0) {
            out.note = "cancellation at " + tree.name(vn);
            return out;
        }
        parts.push_back(cand->flow);
        coef.push_back(alpha);
        s_at.push_back(prev + alpha * a);
    }
    auto gen = [parts, coef](const Flow&, const Vertex& w) -> double {
        double s = 0.0;
        for (std::size_t i = 0; i < parts.size(); ++i) s += coef[i] * parts[i](w);
        return s;
    };
    Flow::Traits tr;
    tr.note = "universal fixed point over " + std::to_string(order.size()) + " vertices";
    out.flow = Flow(tree, ShiftForm::Unweighted, order.empty() ? tree.base() : order.front(), gen, {}, tr);
    out.coefficients = coef;
    out.residual = is_backward_invariant(out.flow, check, tol, ShiftForm::Unweighted);
    out.min_abs = kInf;
    for (const auto& v : order) out.min_abs = std::min(out.min_abs, std::abs(out.flow(v)));
    out.answer = out.residual.invariant() && out.min_abs > 0.0 ? Answer::Yes : Answer::Unknown;
    if (out.answer != Answer::Yes) out.note = "residual or universality check failed";
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric trees: closed-form series

namespace detail {

inline Growth product_growth(const Rule& r, double shift) { return r.log_sum_growth().shifted(shift); }

}  // namespace detail

inline Verdict classify_chaos_symmetric(const SymmetricSpec& spec, const SpaceSpec& space) {
    space.validate();
    Verdict v;
    v.vertices = {"generation representatives"};
    const bool l1 = space.family == SpaceFamily::Lp && space.p == 1.0;
    const bool c0 = space.family == SpaceFamily::C0;
    const bool free_left = spec.free_left_end();
    v.theorem = l1 ? "symmetric weight on l^1: forward reciprocal product series"
                   : "symmetric tree and weight: closed-form forward series";

    // forward condition
    bool forward = false, forward_known = true;
    if (c0) {
        Growth g = detail::product_growth(spec.gamma, 0.0) + detail::product_growth(spec.lambda, 1.0);
        forward = g.limit_sign() > 0;
        v.add("forward product growth (linear coefficient)", g.linear);
    } else {
        auto s = symmetric_log_chat(spec.gamma, spec.lambda, 0, Exponent(space.p));
        forward_known = s.certified || s.log_value == kInf;
        forward = s.log_value < kInf;
        v.add("forward series", s.log_value == kInf ? kInf : std::exp(space.p * s.log_value));
    }

    // backward condition along the left end
    bool needs_backward = !spec.rooted && (l1 || free_left);
    bool backward = true;
    if (needs_backward) {
        Rule left = spec.effective_lambda_left();
        Growth g = detail::product_growth(left, -1.0);
        if (c0) backward = g.limit_sign() < 0;
        else backward = (g * space.p).exp_summable();
        double partial = 0.0, L = spec.lambda.log_abs_at(0);
        for (std::int64_t n = 1; n <= 64; ++n) {
            partial += c0 ? 0.0 : std::exp(space.p * L);
            L += left.log_abs_at(n - 1);
        }
        if (!c0) v.add("backward series partial sum (64 terms)", partial);
        v.theorem += free_left ? " plus backward series on the free left end" : " plus backward series";
    }

    if (!forward_known) {
        v.answer = Answer::Unknown;
        v.reason = "forward series not decided by the declared rules";
        return v;
    }
    if (forward && backward) {
        v.answer = Answer::Yes;
        v.certificate = c0 ? "forward products diverge" : "forward series converges";
        if (needs_backward) v.certificate += c0 ? "; backward products tend to 0" : "; backward series converges";
    } else {
        v.answer = Answer::No;
        v.certificate = !forward ? (c0 ? "forward products stay bounded" : "forward series diverges")
                                 : (c0 ? "backward products do not tend to 0" : "backward series diverges");
    }
    return v;
}

// ---------------------------------------------------------------------------
// General classification

namespace detail {

struct VertexFinding {
    Answer answer = Answer::Unknown;
    std::string certificate;
    std::vector<std::pair<std::string, double>> quantities;
};

// The unrooted sweep: smallest N with normalized c_p(V_-^N(v)) < eps for eps = 1, 1/2, ...
inline VertexFinding derived_sweep(const Tree& tree, const Vertex& v, const Exponent& p, const Budget& budget) {
    VertexFinding out;
    const std::string name = tree.name(v);
    if (p.is_one()) {
        auto af = tree.source().ancestor_floor(v);
        auto gf = tree.source().generation_floor(v);
        if (af && gf) {
            double floor = std::min(*af, *gf);
            if (floor > 0.0) {
                out.answer = Answer::No;
                out.certificate = "every V_-^N(" + name + ") has normalized c_1 >= " + format_double(floor) +
                                  " (ancestor and generation weight floors)";
                out.quantities.emplace_back("weight floor at " + name, floor);
                return out;
            }
        }
    }
    int eps_index = 0;
    double eps = 1.0;
    for (int N = 1; N <= budget.max_period && eps_index <= budget.eps_steps; ++N) {
        auto [mt, lm] = derived_minus_tree(tree, v, N);
        ResistanceEngine eng(mt, p, budget);
        BoundEstimate c;
        try {
            c = eng.normalized(v);
        } catch (const std::exception&) {
            continue;
        }
        while (eps_index <= budget.eps_steps && c.upper < eps) {
            out.quantities.emplace_back("N for eps " + format_double(eps) + " at " + name, double(N));
            ++eps_index;
            eps *= 0.5;
        }
    }
    if (eps_index > budget.eps_steps) {
        out.answer = Answer::Yes;
        out.certificate = "c_p(V_-^N(" + name + ")) < " + format_double(2.0 * eps) + " reached";
    } else {
        out.certificate = "eps " + format_double(eps) + " not reached at " + name + " within N <= " +
                          std::to_string(budget.max_period);
    }
    return out;
}

template <class F>
std::vector<VertexFinding> map_vertices(const std::vector<Vertex>& vs, int threads, F&& fn) {
    std::vector<VertexFinding> out(vs.size());
    if (threads <= 1 || vs.size() < 2) {
        for (std::size_t i = 0; i < vs.size(); ++i) {
            out[i] = fn(vs[i]);
            if (out[i].answer == Answer::No) break;
        }
        return out;
    }
    std::vector<std::future<void>> jobs;
    std::size_t T = std::min<std::size_t>(std::size_t(threads), vs.size());
    for (std::size_t t = 0; t < T; ++t)
        jobs.push_back(std::async(std::launch::async, [&, t] {
            for (std::size_t i = t; i < vs.size(); i += T) out[i] = fn(vs[i]);
        }));
    for (auto& j : jobs) j.get();
    return out;
}

}  // namespace detail

inline Verdict classify_chaos(const Tree& tree, const SpaceSpec& space, const Budget& budget = {},
                              std::optional<std::vector<Vertex>> sample = std::nullopt) {
    space.validate();
    budget.validate();
    Verdict out;
    OperatorCheck op = operator_defined_check(tree, space, budget, sample);
    if (op.bounded.answer != Answer::Yes) {
        out.theorem = op.bounded.theorem;
        out.reason = "not certified to be an operator on " + space.name() + ": " +
                     (op.bounded.reason.empty() ? op.bounded.certificate : op.bounded.reason);
        return out;
    }
    if (const SymmetricSpec* spec = tree.source().symmetric_spec()) {
        out = classify_chaos_symmetric(*spec, space);
        out.add("operator bound", *op.bound);
        return out;
    }

    std::vector<Vertex> vs = sample ? *sample : detail::default_sample(tree, budget);
    for (const auto& v : vs) out.vertices.push_back(tree.name(v));
    const Exponent p = space.flow_exponent();
    const bool c0 = space.family == SpaceFamily::C0;

    // leaves carry no periodic points
    {
        std::optional<Vertex> leaf;
        for (const auto& v : vs)
            if (tree.is_leaf(v)) {
                leaf = v;
                break;
            }
        if (!leaf && tree.source().has_leaves()) {
            Vertex w = vs.front();
            for (int d = 0; d < 4 * budget.depth && !tree.is_leaf(w); ++d) w = tree.child_groups(w).front().member(0);
            if (tree.is_leaf(w)) leaf = w;
        }
        if (leaf) {
            out.answer = Answer::No;
            out.theorem = "leaf obstruction: every periodic point vanishes at a leaf";
            out.certificate = "leaf " + tree.name(*leaf);
            out.vertices = {tree.name(*leaf)};
            return out;
        }
    }

    // forward condition: c_p(V(v)) finite at every sampled vertex
    auto engine = std::make_shared<const ResistanceEngine>(tree, p, budget);
    std::map<ShapeKey, std::size_t> shape_rep;
    std::vector<Vertex> forward_vs;
    for (const auto& v : vs) {
        if (auto k = tree.source().shape(v)) {
            if (shape_rep.count(*k)) continue;
            shape_rep[*k] = forward_vs.size();
        }
        forward_vs.push_back(v);
    }
    auto forward = detail::map_vertices(forward_vs, budget.threads, [&](const Vertex& v) {
        detail::VertexFinding f;
        BoundEstimate c = engine->normalized(v);
        f.quantities.emplace_back("c(V(" + tree.name(v) + "))/|mu|", c.status == Status::CertifiedInfinite ? kInf : c.value);
        if (c.status == Status::CertifiedInfinite) {
            f.answer = Answer::No;
            f.certificate = "c(V(" + tree.name(v) + ")) = inf: " + c.certificate;
        } else if (c.certified_finite()) {
            f.answer = Answer::Yes;
        } else {
            f.certificate = "c(V(" + tree.name(v) + ")) not certified finite";
        }
        return f;
    });
    const std::string rooted_tag = c0 ? "rooted c0: certificate weight with finite c_inf at every vertex"
                                      : (p.is_one() ? "rooted l^1: a branch with summable weights from every vertex"
                                                    : "rooted l^p: finite continued fraction at every vertex");
    const std::string unrooted_tag =
        c0 ? "unrooted c0: certificate weight on V(v) and V_-^N(v)"
           : (p.is_one() ? "unrooted l^1: summable branches from v and vanishing V_-^N(v) tails"
                         : "unrooted l^p: finite c_p(V(v)) and c_p(V_-^N(v)) -> 0");
    out.theorem = tree.rooted() ? rooted_tag : unrooted_tag;
    bool all_forward = true;
    for (std::size_t i = 0; i < forward.size(); ++i) {
        for (auto& q : forward[i].quantities) out.quantities.push_back(q);
        if (forward[i].answer == Answer::No) {
            out.answer = Answer::No;
            out.certificate = forward[i].certificate;
            out.vertices = {tree.name(forward_vs[i])};
            return out;
        }
        if (forward[i].answer != Answer::Yes) {
            all_forward = false;
            if (out.reason.empty()) out.reason = forward[i].certificate;
        }
    }

    if (tree.rooted()) {
        if (c0) {
            out.reason = "c0 needs a certificate weight; none available for this tree";
            return out;
        }
        if (all_forward) {
            out.answer = Answer::Yes;
            out.certificate = "c(V(v)) certified finite on " + std::to_string(forward_vs.size()) +
                              " representative vertices";
        }
        return out;
    }

    // unrooted: the derived trees V_-^N(v)
    if (tree.source().ancestors_single_child(vs.front())) {
        out.reason = "free left end without declared rules for the ancestor series";
        return out;
    }
    auto sweep = detail::map_vertices(vs, budget.threads, [&](const Vertex& v) {
        return detail::derived_sweep(tree, v, p, budget);
    });
    bool all_sweep = true;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        for (auto& q : sweep[i].quantities) out.quantities.push_back(q);
        if (sweep[i].answer == Answer::No) {
            out.answer = Answer::No;
            out.certificate = sweep[i].certificate;
            out.vertices = {tree.name(vs[i])};
            return out;
        }
        if (sweep[i].answer != Answer::Yes) {
            all_sweep = false;
            if (out.reason.empty()) out.reason = sweep[i].certificate;
        }
    }
    if (c0) {
        out.reason = "c0 needs a certificate weight; none available for this tree";
        return out;
    }
    if (all_forward && all_sweep) {
        out.answer = Answer::Yes;
        out.certificate = "c(V(v)) certified finite and every eps down to " +
                          format_double(std::ldexp(1.0, -budget.eps_steps)) + " reached on " +
                          std::to_string(vs.size()) + " sampled vertices";
        out.reason.clear();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rolewicz operators lambda B

struct RolewiczTree {
    int children = 2;
    bool rooted = true;
};

inline Verdict rolewicz_classify(const RolewiczTree& shape, double lambda, const SpaceSpec& space) {
    if (shape.children < 1) throw std::invalid_argument("children count must be positive");
    SymmetricSpec spec{Rule::constant(double(shape.children)), Rule::constant(lambda), shape.rooted, std::nullopt,
                       std::nullopt};
    Verdict v = classify_chaos_symmetric(spec, space);
    double N = shape.children;
    double threshold = space.family == SpaceFamily::C0 ? 1.0 / N : std::pow(N, -1.0 / Exponent(space.p).conjugate());
    v.theorem = "Rolewicz threshold |lambda| > N^(-1/p*) (1/N on c0)";
    if (!shape.rooted && shape.children == 1) v.theorem += "; two-sided line needs |lambda| < 1 as well";
    v.add("threshold", threshold);
    v.add("|lambda|", std::abs(lambda));
    v.certificate += "; chaotic, mixing and hypercyclic coincide";
    return v;
}

// ---------------------------------------------------------------------------
// Hypercyclicity and mixing witnesses

struct MixingReport {
    Verdict hypercyclic;
    Verdict mixing;
    std::vector<double> witness;  // max over the sample of w_n(v), n = 1, 2, ...
};

inline MixingReport hypercyclicity_mixing_test(const Tree& tree, const SpaceSpec& space, const Budget& budget = {},
                                               std::optional<Verdict> chaos = std::nullopt) {
    space.validate();
    MixingReport out;
    const double e = space.dual_exponent();
    const double inv_e = std::isinf(e) ? 0.0 : 1.0 / e;
    auto finish = [&](Answer a, const std::string& theorem, const std::string& cert) {
        for (Verdict* v : {&out.hypercyclic, &out.mixing}) {
            v->answer = a;
            v->theorem = theorem;
            if (a == Answer::Unknown) v->reason = cert;
            else v->certificate = cert;
        }
    };

    if (const SymmetricSpec* spec = tree.source().symmetric_spec()) {
        // log w_n = -(1/e) sum_{k<n} log gamma_k - sum_{k=1..n} log |lambda_k|
        Growth fwd = -(detail::product_growth(spec->gamma, 0.0) * inv_e + detail::product_growth(spec->lambda, 1.0));
        const std::int64_t K = std::max<std::int64_t>(4096, budget.depth);
        double L = 0.0;
        out.witness.reserve(std::size_t(K));
        for (std::int64_t n = 1; n <= K; ++n) {
            L -= inv_e * std::log(spec->gamma_at(n - 1)) + std::log(std::abs(spec->lambda_at(n)));
            out.witness.push_back(std::exp(L));
        }
        std::string theorem = "reverse Hoelder witness w_n(v) = (sum_{X^n(v)} |lambda(v->u)|^{p*})^(-1/p*)";
        bool fwd_zero = fwd.limit_sign() < 0;
        bool bwd_zero = true;
        if (!spec->rooted) {
            theorem += " with backward witness on X^n(prt^n v)";
            Growth a = detail::product_growth(spec->effective_lambda_left(), -1.0);
            Growth b = detail::product_growth(spec->effective_gamma_left(), 0.0) * inv_e;
            bwd_zero = a.limit_sign() < 0 || b.limit_sign() > 0;
        }
        for (Verdict* v : {&out.hypercyclic, &out.mixing}) {
            v->vertices = {"generation representatives"};
            v->add("w_1", out.witness.front());
            v->add("w_" + std::to_string(K), out.witness.back());
        }
        if (fwd_zero && bwd_zero) {
            finish(Answer::Yes, theorem, "declared rules give w_n -> 0 along the full sequence");
        } else {
            finish(Answer::No, theorem,
                   !fwd_zero ? "declared rules bound w_n below by a positive constant"
                             : "declared rules bound the backward witness below by a positive constant");
        }
        return out;
    }

    if (chaos && chaos->yes()) {
        finish(Answer::Yes, "chaotic shifts are mixing", "classified chaotic: " + chaos->certificate);
        return out;
    }

    // single branch from the base: w_n = |mu_{v_n} / mu_v| with a declared rule
    if (auto t = tree.source().branch_tail(tree.base()); t && tree.rooted()) {
        Growth g = t->weights.log_term_growth();
        for (std::int64_t n = 1; n <= budget.depth; ++n)
            out.witness.push_back(std::exp(t->weights.log_abs_at(t->start + n) - t->weights.log_abs_at(t->start)));
        if (g.limit_sign() >= 0) {
            finish(Answer::No, "single branch witness w_n = |mu_{v_n}/mu_v|",
                   "declared branch rule bounds w_n below by a positive constant");
            return out;
        }
    }

    // numeric witness on the sample
    auto vs = detail::default_sample(tree, budget);
    for (int n = 1; n <= budget.depth; ++n) {
        double worst = 0.0;
        bool ok = true;
        for (const auto& v : vs) {
            // sum over X^n(v) of |mu_u|^{-e} relative to mu_v
            double acc = -kInf;
            std::function<void(const Vertex&, int, double)> walk = [&](const Vertex& w, int left, double lw) {
                if (!ok) return;
                if (left == 0) {
                    acc = std::isinf(e) ? std::max(acc, -lw) : log_add(acc, -e * lw);
                    return;
                }
                for (const auto& g : tree.child_groups(w)) {
                    if (g.infinite() || g.count > 64.0) {
                        ok = false;
                        return;
                    }
                    for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) {
                        Vertex u = g.member(i);
                        walk(u, left - 1, lw + std::log(std::abs(tree.ratio(u))));
                    }
                }
            };
            walk(v, n, 0.0);
            if (!ok) break;
            double lwn = std::isinf(e) ? -acc : -acc / e;
            worst = std::max(worst, safe_exp(lwn));
        }
        if (!ok) break;
        out.witness.push_back(worst);
    }
    finish(Answer::Unknown, "reverse Hoelder witness on sampled vertices", "numeric witnesses only; no rule certificate");
    return out;
}

// ---------------------------------------------------------------------------
// Bergman shift: lambda_u = sqrt((n_u + q - 1) / n_u) / sqrt(|X(prt u)|)

class BergmanSource : public TreeSource {
public:
    BergmanSource(std::shared_ptr<const TreeSource> base, double q) : base_(std::move(base)), q_(q) {
        if (!base_->rooted()) throw std::invalid_argument("the Bergman shift lives on a rooted tree");
        if (!(q >= 1.0)) throw std::invalid_argument("q must be >= 1");
        root_ = base_->natural_base();
        while (auto p = base_->parent(root_)) root_ = *p;
    }

    double lambda_at(const Vertex& u) const {
        double n = double(base_->depth(u) - base_->depth(root_));
        return std::sqrt((n + q_ - 1.0) / n) / std::sqrt(child_count(*base_->parent(u)));
    }
    double child_count(const Vertex& v) const {
        double c = 0.0;
        for (const auto& g : base_->children(v)) c += g.count;
        if (std::isinf(c)) throw std::invalid_argument("the Bergman shift needs a locally finite tree");
        return c;
    }

    Vertex natural_base() const override { return root_; }
    bool rooted() const override { return true; }
    bool contains(const Vertex& v) const override { return base_->contains(v); }
    std::optional<Vertex> parent(const Vertex& v) const override { return base_->parent(v); }
    std::vector<ChildGroup> children(const Vertex& v) const override { return base_->children(v); }
    std::int64_t depth(const Vertex& v) const override { return base_->depth(v); }
    double ratio(const Vertex& v) const override {
        if (v == root_) return 1.0;
        return 1.0 / lambda_at(v);
    }
    std::string name(const Vertex& v) const override { return base_->name(v); }
    std::optional<Vertex> parse_vertex(std::string_view t) const override { return base_->parse_vertex(t); }
    std::string description() const override {
        return "Bergman weights q = " + format_double(q_) + " on " + base_->description();
    }
    bool has_leaves() const override { return base_->has_leaves(); }

private:
    std::shared_ptr<const TreeSource> base_;
    double q_;
    Vertex root_;
};

struct BergmanReport {
    Tree tree;  // structure with the Bergman operator weights
    Flow flow;  // fixed point over V(v), weighted form
    std::vector<double> generation_sums;  // sum_{X^k(v)} |f|^2, k = 1..K
    std::vector<double> closed_form;      // prod_{j=1..k} (m+j)/(m+j-1+q)
    std::vector<double> partial_sums;
    double max_relative_error = 0.0;
    bool in_l2 = false;
    Status membership = Status::Unknown;
    bool discrepancy = false;  // the membership claim for all q > 1 fails here
    std::string note;
};

inline BergmanReport bergman_analysis(const Tree& structure, double q, const Vertex& v, int generations_k = 200) {
    auto src = std::make_shared<BergmanSource>(structure.source_ptr(), q);
    Tree bt(src, src->natural_base(), 1.0);
    const std::int64_t m = bt.source().depth(v) - bt.source().depth(src->natural_base());
    auto gen = [src, v](const Flow& self, const Vertex& u) -> double {
        if (u == v) return 1.0;
        Vertex p = *src->parent(u);
        return self(p) / (src->lambda_at(u) * src->child_count(p));
    };
    Flow::Traits tr;
    tr.nonnegative = true;
    tr.group_symmetric = true;
    tr.note = "Bergman fixed point";
    Flow f(bt, ShiftForm::Weighted, v, gen, {FlowDomain{descendants_subtree(bt, v), false}}, tr);
    BergmanReport out{bt, f, {}, {}, {}, 0.0, false, Status::Unknown, false, {}};

    // generations with multiplicities of identical groups
    std::vector<std::pair<Vertex, double>> level{{v, 1.0}};
    double closed = 1.0, partial = 0.0;
    for (int k = 1; k <= generations_k; ++k) {
        std::vector<std::pair<Vertex, double>> next;
        for (const auto& [w, mult] : level) {
            for (const auto& g : bt.child_groups(w)) {
                if (g.infinite()) throw std::invalid_argument("the Bergman shift needs a locally finite tree");
                if (g.kind == ChildGroup::Kind::Identical) next.emplace_back(g.member(0), mult * g.count);
                else
                    for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) next.emplace_back(g.member(i), mult);
            }
        }
        if (next.size() > (1u << 20)) throw BudgetExceeded("generation too large");
        level = std::move(next);
        double s = 0.0;
        for (const auto& [w, mult] : level) {
            double x = f(w);
            s += mult * x * x;
        }
        closed *= double(m + k) / (double(m + k - 1) + q);
        partial += s;
        out.generation_sums.push_back(s);
        out.closed_form.push_back(closed);
        out.partial_sums.push_back(partial);
        out.max_relative_error = std::max(out.max_relative_error, std::abs(s - closed) / closed);
    }
    // prod (m+j)/(m+j-1+q) ~ C k^(1-q): summable iff q > 2
    out.in_l2 = q > 2.0;
    out.membership = out.in_l2 ? Status::Exact : Status::CertifiedInfinite;
    out.discrepancy = q > 1.0 && q <= 2.0;
    out.note = out.in_l2 ? "generation sums decay like k^(1-q); series converges"
                         : "generation sums decay like k^(1-q); series diverges";
    if (out.discrepancy) out.note += "; membership claimed for all q > 1 does not hold for 1 < q <= 2";
    return out;
}

}  // namespace treeshift
