#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "engine.hpp"
#include "tree_ops.hpp"

namespace treeshift {

// Unweighted: f(v) = sum_{u in X(v)} f(u), the backward shift on l^p(V, mu).
// Weighted:   f(v) = sum_{u in X(v)} lambda_u f(u), the shift B_lambda on unweighted l^p(V).
enum class ShiftForm { Unweighted, Weighted };

inline const char* to_string(ShiftForm f) { return f == ShiftForm::Unweighted ? "unweighted" : "weighted"; }

// A rooted part of the support, enumerated by its own generations.
struct FlowDomain {
    Tree tree;
    bool skip_top = false;  // top already counted by an earlier domain
};


struct FlowTraits {
    bool nonnegative = false;      // certified by construction
    bool group_symmetric = false;  // equal values on members of identical groups
    std::string unbounded_generation_mass;  // certificate that generation l^1 sums are unbounded
    std::string note;
};

// Lazily evaluated vertex function with a memo shared by all copies.
class Flow {
public:
    using Generator = std::function<double(const Flow&, const Vertex&)>;

    using Traits = FlowTraits;

    Flow(Tree tree, ShiftForm form, Vertex base, Generator gen, std::vector<FlowDomain> domains = {}, Traits traits = {})
        : state_(std::make_shared<State>(std::move(tree), form, base, std::move(gen), std::move(domains),
                                         std::move(traits))) {}

    const Tree& tree() const { return state_->tree; }
    ShiftForm form() const { return state_->form; }
    Vertex base() const { return state_->base; }
    const std::vector<FlowDomain>& domains() const { return state_->domains; }
    const Traits& traits() const { return state_->traits; }

    double operator()(const Vertex& v) const {
        {
            std::lock_guard<std::mutex> lock(state_->mu);
            auto it = state_->memo.find(v);
            if (it != state_->memo.end()) return it->second;
        }
        double x = state_->gen(*this, v);
        std::lock_guard<std::mutex> lock(state_->mu);
        state_->memo.emplace(v, x);
        return x;
    }
    double value(const Vertex& v) const { return (*this)(v); }

    Status status() const {
        std::lock_guard<std::mutex> lock(state_->mu);
        return state_->status;
    }
    void degrade(Status s, const std::string& why = {}) const {
        std::lock_guard<std::mutex> lock(state_->mu);
        if (status_rank(s) > status_rank(state_->status)) {
            state_->status = s;
            if (!why.empty()) state_->reason = why;
        }
    }
    std::string reason() const {
        std::lock_guard<std::mutex> lock(state_->mu);
        return state_->reason;
    }

    // Evaluated values in vertex order.
    std::map<Vertex, double> evaluated() const {
        std::lock_guard<std::mutex> lock(state_->mu);
        return {state_->memo.begin(), state_->memo.end()};
    }

private:
    struct State {
        State(Tree t, ShiftForm f, Vertex b, Generator g, std::vector<FlowDomain> d, Traits tr)
            : tree(std::move(t)), form(f), base(b), gen(std::move(g)), domains(std::move(d)), traits(std::move(tr)) {}
        Tree tree;
        ShiftForm form;
        Vertex base;
        Generator gen;
        std::vector<FlowDomain> domains;
        Traits traits;
        std::mutex mu;
        std::unordered_map<Vertex, double, VertexHash> memo;
        Status status = Status::Exact;
        std::string reason;
    };
    std::shared_ptr<State> state_;
};

using Sparse = std::map<Vertex, double>;

// The same fixed point read for the other shift form: g = mu f / mu_base, or back.
inline Flow convert_form(const Flow& f, ShiftForm target) {
    if (f.form() == target) return f;
    const Tree& t = f.tree();
    double lb = t.log_abs_mu_and_sign(f.base()).first;
    bool to_weighted = target == ShiftForm::Weighted;
    auto gen = [f, lb, to_weighted](const Flow&, const Vertex& v) {
        auto [l, s] = f.tree().log_abs_mu_and_sign(v);
        double x = f(v);
        if (x == 0.0) return 0.0;
        double scale = std::exp(to_weighted ? l - lb : lb - l);
        return (to_weighted ? s : 1.0 / s) * scale * x;
    };
    Flow::Traits tr = f.traits();
    tr.group_symmetric = false;
    return Flow(t, target, f.base(), gen, f.domains(), tr);
}

namespace detail {

// Minimal flow shares inside one rooted tree, from the engine's cached estimates.
class ShareTable {
public:
    explicit ShareTable(std::shared_ptr<const ResistanceEngine> engine) : engine_(std::move(engine)) {}

    const ResistanceEngine& engine() const { return *engine_; }

    // log(r_p(V(u)) / |mu_parent(u)|)
    double log_child_weight(const Vertex& u, Status& st) const {
        auto h = engine_->hat(u);
        st = worse(st, h.status == Status::CertifiedInfinite ? Status::Exact : h.status);
        return std::log(std::abs(engine_->tree().ratio(u))) + h.log_r;
    }

    // log sum over children of (r_p(V(u)) / |mu_parent|)^{-q}; +inf when an infinite group forces c = 0
    double log_denominator(const Vertex& parent, Status& st) const {
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = denom_.find(parent);
            if (it != denom_.end()) {
                st = worse(st, it->second.second);
                return it->second.first;
            }
        }
        double q = q_();
        double acc = -kInf;
        Status local = Status::Exact;
        for (const auto& g : engine_->tree().child_groups(parent)) {
            if (g.count <= 0.0) continue;
            auto f = engine_->group_factor(g);
            if (f.forces_zero) {
                acc = kInf;
                break;
            }
            double w = log_child_weight(g.member(0), local);
            if (w == kInf) continue;
            acc = log_add(acc, f.log_mass - q * w);
        }
        std::lock_guard<std::mutex> lock(mu_);
        denom_.emplace(parent, std::pair{acc, local});
        st = worse(st, local);
        return acc;
    }

    double share(const Vertex& parent, const Vertex& u, Status& st) const {
        double d = log_denominator(parent, st);
        if (d == kInf) return 0.0;
        double w = log_child_weight(u, st);
        if (w == kInf || d == -kInf) return 0.0;
        return std::exp(-q_() * w - d);
    }

private:
    double q_() const {
        const auto& p = engine_->exponent();
        return p.is_infinite() ? 1.0 : p.conjugate();
    }

    std::shared_ptr<const ResistanceEngine> engine_;
    mutable std::mutex mu_;
    mutable std::unordered_map<Vertex, std::pair<double, Status>, VertexHash> denom_;
};

// f(top) = 1, f(u) = f(parent(u)) * share(u) inside the engine's tree.
inline std::function<double(const Flow&, const Vertex&)> rooted_share_generator(std::shared_ptr<const ShareTable> table,
                                                                               Vertex top) {
    return [table, top](const Flow& self, const Vertex& v) -> double {
        if (v == top) return 1.0;
        const Tree& t = table->engine().tree();
        auto p = t.parent(v);
        if (!p) return 0.0;
        double fp = self(*p);
        if (fp == 0.0) return 0.0;
        Status st = Status::Exact;
        double s = table->share(*p, v, st);
        if (table->log_denominator(*p, st) == kInf)
            self.degrade(Status::Unknown, "infimum not attained: infinite group of identical children at " + t.name(*p));
        if (st != Status::Exact) self.degrade(st, "child resistance not certified");
        return fp * s;
    };
}

}  // namespace detail

struct MinimalFlow {
    Flow flow;
    BoundEstimate norm;      // (sum |f mu|^p)^{1/p} = r_p(V, mu)
    BoundEstimate off_root;  // c_p(V, mu)
    bool available = true;
    double epsilon = 0.0;  // p = 1: relative excess of the returned branch over the infimum
    std::string note;
};

// Minimal-energy unit flow on V(top) for the unweighted shift on l^p(V, mu).
inline MinimalFlow minimal_unit_flow_in(std::shared_ptr<const ResistanceEngine> engine, const Vertex& top,
                                        std::vector<FlowDomain> domains) {
    const Tree& tree = engine->tree();
    const Exponent& p = engine->exponent();
    BoundEstimate r = engine->resistance(top);
    BoundEstimate c = engine->continued_fraction(top);
    Flow::Traits tr;
    tr.nonnegative = true;
    tr.group_symmetric = !p.is_one();
    bool available = r.status != Status::CertifiedInfinite;

    if (!p.is_one()) {
        auto table = std::make_shared<const detail::ShareTable>(engine);
        tr.note = p.is_infinite() ? "one minimizer" : "unique minimizer";
        Flow f(tree, ShiftForm::Unweighted, top, detail::rooted_share_generator(table, top), std::move(domains), tr);
        MinimalFlow out{f, r, c, available, 0.0, tr.note};
        if (!available) {
            out.note = "r_p is infinite; no flow of finite energy";
            f.degrade(Status::Unknown, out.note);
        } else if (r.status != Status::Exact) {
            f.degrade(r.status, "resistance " + std::string(to_string(r.status)));
        }
        return out;
    }

    // p = 1: indicator of a branch following the smallest child resistance
    struct Choice {
        std::optional<Vertex> next;
        double excess = 0.0;
    };
    auto choices = std::make_shared<std::unordered_map<Vertex, Choice, VertexHash>>();
    auto choice_mu = std::make_shared<std::mutex>();
    auto worst = std::make_shared<double>(0.0);
    std::shared_ptr<const ResistanceEngine> eng = engine;
    auto choose = [eng, choices, choice_mu, worst](const Vertex& v) -> Choice {
        {
            std::lock_guard<std::mutex> lock(*choice_mu);
            auto it = choices->find(v);
            if (it != choices->end()) return it->second;
        }
        const Tree& t = eng->tree();
        Choice best;
        double best_w = kInf, best_inf = kInf;
        for (const auto& g : t.child_groups(v)) {
            if (g.count <= 0.0) continue;
            Vertex m0 = g.member(0);
            double w0 = std::log(std::abs(t.ratio(m0))) + eng->hat(m0).log_r;
            if (w0 == kInf) continue;
            Vertex pick = m0;
            double pick_w = w0, group_inf = w0;
            if (g.kind == ChildGroup::Kind::Scaled && g.scale) {
                const Rule& s = *g.scale;
                double ls0 = s.log_abs_at(0);
                std::int64_t lim = g.infinite() ? 4096 : std::int64_t(g.count);
                for (std::int64_t i = 1; i < lim; ++i) {
                    double wi = w0 + s.log_abs_at(i) - ls0;
                    if (wi < pick_w) pick_w = wi, pick = g.member(i);
                }
                if (g.infinite()) {
                    double inf = s.abs_infimum_from(0);
                    group_inf = inf == 0.0 ? -kInf : w0 + std::log(inf) - ls0;
                } else {
                    group_inf = pick_w;
                }
            }
            if (group_inf < best_inf || (group_inf == best_inf && pick_w < best_w)) {
                best_inf = group_inf;
                best_w = pick_w;
                best.next = pick;
            }
        }
        if (best.next) best.excess = best_inf == -kInf ? kInf : std::expm1(best_w - best_inf);
        std::lock_guard<std::mutex> lock(*choice_mu);
        *worst = std::max(*worst, best.excess);
        choices->emplace(v, best);
        return best;
    };
    auto gen = [eng, choose, top](const Flow& self, const Vertex& v) -> double {
        if (v == top) return 1.0;
        auto p = eng->tree().parent(v);
        if (!p || self(*p) == 0.0) return 0.0;
        auto ch = choose(*p);
        if (ch.excess > 0.0) self.degrade(Status::LowerBound, "epsilon-minimizing branch");
        return ch.next && *ch.next == v ? 1.0 : 0.0;
    };
    tr.note = "branch indicator";
    Flow f(tree, ShiftForm::Unweighted, top, gen, std::move(domains), tr);
    MinimalFlow out{f, r, c, available, 0.0, tr.note};
    if (!available) {
        out.note = "no branch with summable weights";
        f.degrade(Status::Unknown, out.note);
        return out;
    }
    // walk the chosen branch to record epsilon
    Vertex v = top;
    for (int d = 0; d < engine->budget().depth; ++d) {
        auto ch = choose(v);
        if (!ch.next) break;
        out.epsilon = std::max(out.epsilon, ch.excess);
        v = *ch.next;
    }
    if (out.epsilon > 0.0) out.note = "epsilon-minimizing branch";
    return out;
}

inline MinimalFlow minimal_unit_flow(const Tree& tree, const Vertex& top, const Exponent& p, const Budget& budget = {}) {
    Tree sub = descendants_subtree(tree, top);
    auto engine = std::make_shared<const ResistanceEngine>(sub, p, budget);
    return minimal_unit_flow_in(engine, top, {FlowDomain{sub, false}});
}

inline MinimalFlow minimal_unit_flow(const Tree& tree, const Exponent& p, const Budget& budget = {}) {
    return minimal_unit_flow(tree, tree.base(), p, budget);
}

// ---------------------------------------------------------------------------
// Energy sum_v (|f(v)| w_v)^q by generations of the flow's domains.

namespace detail {

struct Weighted {
    Vertex v;
    double mult;    // number of identical vertices represented
    double log_w;   // log weight
};

}  // namespace detail

inline BoundEstimate flow_energy(const Flow& f, const Exponent& q, const Budget& budget = {},
                                 const std::optional<WeightMap>& weight = std::nullopt) {
    if (q.is_infinite()) throw std::invalid_argument("flow energy needs a finite exponent");
    BoundEstimate est;
    est.tolerance = budget.tol;
    const double qv = q.value();
    const int max_depth = std::max(4 * budget.depth, 64);
    const std::size_t cap = std::size_t(std::max<std::int64_t>(4096, budget.sample_size));
    double total = 0.0;
    bool truncated = false, all_certified = true;
    std::vector<FlowDomain> domains = f.domains();
    if (domains.empty()) domains.push_back({descendants_subtree(f.tree(), f.base()), false});

    for (const auto& dom : domains) {
        const Tree& t = dom.tree;
        std::vector<detail::Weighted> level{{t.base(), 1.0, safe_log_abs(weight ? weight->at(t.base()) : t.base_weight())}};
        std::vector<double> sums;
        std::vector<std::vector<ShapeKey>> shapes;
        bool closed = false;
        for (int d = 0; d <= max_depth && !level.empty(); ++d) {
            double s = 0.0;
            std::vector<ShapeKey> keys;
            bool shaped = true;
            for (const auto& x : level) {
                if (d == 0 && dom.skip_top) continue;
                double val = f(x.v);
                if (val != 0.0) s += x.mult * std::exp(qv * (std::log(std::abs(val)) + x.log_w));
                if (auto k = t.source().shape(x.v)) keys.push_back(*k);
                else shaped = false;
            }
            std::sort(keys.begin(), keys.end());
            keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
            sums.push_back(s);
            shapes.push_back(shaped ? keys : std::vector<ShapeKey>{});
            total += s;
            est.evidence.push_back({d, total});
            // geometric tail once shapes and the generation ratio are stationary
            std::size_t n = sums.size();
            if (n >= 10 && shaped && shapes[n - 1] == shapes[n - 2] && !shapes[n - 1].empty() && sums[n - 2] > 0.0) {
                double rho = sums[n - 1] / sums[n - 2];
                bool steady = rho < 1.0;
                for (std::size_t k = n - 8; k + 1 < n && steady; ++k)
                    steady = sums[k] > 0.0 && std::abs(sums[k + 1] / sums[k] - rho) <= 1e-9 * rho;
                if (steady) {
                    total += s * rho / (1.0 - rho);
                    est.evidence.push_back({d + 1, total});
                    closed = true;
                    est.certificate = "stationary generation ratio " + format_double(rho);
                    break;
                }
            }
            if (d == max_depth) break;
            std::vector<detail::Weighted> next;
            try {
            for (const auto& x : level) {
                if (f(x.v) == 0.0 && f.traits().nonnegative && f.traits().group_symmetric) continue;
                for (const auto& g : t.child_groups(x.v)) {
                    if (g.count <= 0.0) continue;
                    bool compress = f.traits().group_symmetric && g.kind == ChildGroup::Kind::Identical;
                    if (compress) {
                        if (g.infinite()) {
                            Vertex m = g.member(0);
                            if (f(m) != 0.0) truncated = true;
                            continue;
                        }
                        Vertex m = g.member(0);
                        double lw = weight ? safe_log_abs(weight->at(m)) : x.log_w + std::log(std::abs(t.ratio(m)));
                        next.push_back({m, x.mult * g.count, lw});
                        continue;
                    }
                    std::int64_t lim = g.infinite() ? std::int64_t(cap) : std::int64_t(g.count);
                    if (g.infinite()) truncated = true;
                    for (std::int64_t i = 0; i < lim; ++i) {
                        if (next.size() >= cap) {
                            truncated = true;
                            break;
                        }
                        Vertex m = g.member(i);
                        double lw = weight ? safe_log_abs(weight->at(m)) : x.log_w + std::log(std::abs(t.ratio(m)));
                        next.push_back({m, x.mult, lw});
                    }
                }
            }
            } catch (const BudgetExceeded&) {
                truncated = true;
                next.clear();
            }
            level = std::move(next);
        }
        if (!closed && !level.empty()) all_certified = false;
    }
    est.value = total;
    est.last_increment = est.evidence.size() >= 2
                             ? est.evidence.back().value - est.evidence[est.evidence.size() - 2].value
                             : total;
    if (!truncated && all_certified && f.status() == Status::Exact) {
        est.status = Status::Exact;
        est.upper = total;
        if (est.certificate.empty()) est.certificate = "finite support";
    } else if (est.last_increment <= budget.tol) {
        est.status = Status::LowerBound;
        if (est.certificate.empty()) est.certificate = truncated ? "truncated generations" : "partial sums";
    } else {
        est.status = Status::Unknown;
        est.certificate = "partial sums still increasing";
    }
    return est;
}

// ---------------------------------------------------------------------------

struct ResidualReport {
    double max_residual = 0.0;
    std::optional<Vertex> worst;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // vertices with infinitely many children
    double tolerance = 1e-9;
    bool invariant() const { return max_residual <= tolerance; }
};

// Vertices of the flow's domains (or around its base) down to `depth` generations.
inline std::vector<Vertex> flow_sample(const Flow& f, int depth, std::size_t cap = 1u << 14) {
    std::vector<Vertex> out;
    if (f.domains().empty()) {
        auto gm = generations(f.tree(), f.base(), -depth, depth, depth, cap);
        for (auto& [g, gen] : gm.generations) out.insert(out.end(), gen.vertices.begin(), gen.vertices.end());
        return out;
    }
    for (const auto& dom : f.domains()) {
        auto gm = generations(dom.tree, dom.tree.base(), 0, depth, 0, cap);
        for (auto& [g, gen] : gm.generations) {
            for (const auto& v : gen.vertices) {
                if (g == 0 && dom.skip_top) continue;
                out.push_back(v);
            }
        }
    }
    return out;
}

// |f(v) - sum_{u in X(v)} lambda_u f(u)| over the given vertices, in the flow's ambient tree.
inline ResidualReport is_backward_invariant(const Flow& f, const std::vector<Vertex>& vertices, double tol = 1e-9,
                                            std::optional<ShiftForm> form = std::nullopt) {
    ResidualReport rep;
    rep.tolerance = tol;
    const Tree& t = f.tree();
    ShiftForm fm = form.value_or(f.form());
    for (const auto& v : vertices) {
        auto groups = t.child_groups(v);
        if (groups.empty()) continue;  // leaves are exempt
        bool infinite = false;
        double sum = 0.0, scale = std::abs(f(v));
        for (const auto& g : groups) {
            if (g.infinite() || g.count > 4096.0) {
                infinite = true;
                break;
            }
            for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) {
                Vertex u = g.member(i);
                double term = fm == ShiftForm::Weighted ? t.lambda(u) * f(u) : f(u);
                sum += term;
                scale = std::max(scale, std::abs(term));
            }
        }
        if (infinite) {
            ++rep.skipped;
            continue;
        }
        ++rep.checked;
        double res = std::abs(f(v) - sum);
        if (res > rep.max_residual) {
            rep.max_residual = res;
            rep.worst = v;
        }
    }
    return rep;
}

inline ResidualReport is_backward_invariant(const Flow& f, int depth = 6, double tol = 1e-9) {
    return is_backward_invariant(f, flow_sample(f, depth), tol);
}

// ---------------------------------------------------------------------------

enum class MeasureVerdict { MeasureInduced, NotMeasureInduced, Unknown };

inline const char* to_string(MeasureVerdict v) {
    switch (v) {
        case MeasureVerdict::MeasureInduced: return "MeasureInduced";
        case MeasureVerdict::NotMeasureInduced: return "NotMeasureInduced";
        case MeasureVerdict::Unknown: return "Unknown";
    }
    return "Unknown";
}

struct FlowMeasureReport {
    double leaf_mass = 0.0;
    std::vector<std::pair<std::int64_t, double>> generation_sums;  // (index or ancestor budget, sum)
    MeasureVerdict verdict = MeasureVerdict::Unknown;
    std::string certificate;
};

inline FlowMeasureReport measure_induced_check(const Flow& f, const Budget& budget = {}) {
    FlowMeasureReport rep;
    const Tree& t = f.tree();
    const auto& tr = f.traits();
    if (!tr.unbounded_generation_mass.empty()) {
        // generation 0 seen through more and more ancestors
        for (std::int64_t k = 1; k <= std::max<std::int64_t>(budget.depth, 1); k *= 2) {
            auto gm = generations(t, f.base(), 0, 0, k, std::size_t(1) << 16);
            double s = 0.0;
            for (const auto& v : gm.generations[0].vertices) s += std::abs(f(v));
            rep.generation_sums.push_back({k, s});
        }
        rep.verdict = MeasureVerdict::NotMeasureInduced;
        rep.certificate = tr.unbounded_generation_mass;
        return rep;
    }
    bool rooted_domain = f.domains().size() == 1 && f.domains()[0].tree.rooted();
    int depth = std::min(budget.depth, 16);
    auto gm = f.domains().empty() ? generations(t, f.base(), 0, depth, 0)
                                  : generations(f.domains()[0].tree, f.base(), 0, depth, 0);
    for (const auto& [g, gen] : gm.generations) {
        double s = 0.0;
        for (const auto& v : gen.vertices) {
            double x = std::abs(f(v));
            s += x;
            if (t.child_groups(v).empty()) rep.leaf_mass += x;
        }
        if (!gen.truncated) rep.generation_sums.push_back({g, s});
    }
    if (tr.nonnegative && rooted_domain && f.form() == ShiftForm::Unweighted) {
        rep.verdict = MeasureVerdict::MeasureInduced;
        rep.certificate = "nonnegative flow on a rooted tree";
        return rep;
    }
    rep.certificate = "no structural bound on generation sums";
    return rep;
}

// ---------------------------------------------------------------------------

inline double boundary_mass(const Flow& f, const Vertex& v) { return f(v); }

struct BranchLimit {
    double value = 0.0;
    Status status = Status::Unknown;
    std::vector<Vertex> branch;
    std::vector<double> values;
    std::string certificate;
};

// Follows the child carrying the largest |f| from `start`, for up to `steps` generations.
inline BranchLimit branch_limit(const Flow& f, const Vertex& start, int steps = 64) {
    BranchLimit out;
    const Tree& t = f.tree();
    Vertex v = start;
    out.branch.push_back(v);
    out.values.push_back(f(v));
    for (int s = 0; s < steps; ++s) {
        std::optional<Vertex> best;
        double bv = -1.0;
        for (const auto& g : t.child_groups(v)) {
            std::int64_t lim = g.infinite() ? 64 : std::min<std::int64_t>(std::int64_t(g.count), 64);
            if (f.traits().group_symmetric && g.kind == ChildGroup::Kind::Identical) lim = std::min<std::int64_t>(lim, 1);
            for (std::int64_t i = 0; i < lim; ++i) {
                Vertex u = g.member(i);
                double x = std::abs(f(u));
                if (x > bv) bv = x, best = u;
            }
        }
        if (!best) break;
        v = *best;
        out.branch.push_back(v);
        out.values.push_back(f(v));
    }
    const auto& xs = out.values;
    out.value = xs.back();
    std::size_t n = xs.size();
    if (out.value == 0.0) {
        out.status = Status::Exact;
        out.certificate = "flow vanishes along the branch";
    } else if (n >= 16) {
        bool constant = true, geometric = true;
        double rho = xs[n - 1] / xs[n - 2];
        for (std::size_t k = n / 2; k + 1 < n; ++k) {
            constant = constant && xs[k + 1] == xs[k];
            geometric = geometric && xs[k] != 0.0 && std::abs(xs[k + 1] / xs[k] - rho) <= 1e-12;
        }
        if (constant) {
            out.status = Status::Exact;
            out.certificate = "constant along the last " + std::to_string(n - n / 2) + " vertices";
        } else if (geometric && std::abs(rho) < 1.0) {
            out.value = 0.0;
            out.status = Status::Exact;
            out.certificate = "geometric decay with ratio " + format_double(rho);
        } else {
            out.certificate = "no stationary pattern";
        }
    } else if (t.child_groups(v).empty()) {
        out.status = Status::Exact;
        out.certificate = "branch ends at a leaf";
    }
    return out;
}

// ---------------------------------------------------------------------------

struct UnrootedFlow {
    Flow flow;
    MinimalFlow plus;   // on V^N(v0)
    MinimalFlow minus;  // on V_-^N(v0), in the derived tree
    BoundEstimate energy;
    int period = 1;
    double spine_limit = 0.0;
    Status spine_limit_status = Status::Unknown;
    std::string note;
};

// Unit flow of minimal energy for B^N through v0: f_+ on V^N(v0), +f_- on the spine
// prt^{nN}(v0) and -f_- on the rest of V_-^N(v0), zero on the other generations.
// With N = 1 this is the minimal unit flow of an unrooted tree (or of a rooted tree
// with v0 not the root); with N > 1 it is a periodic point of period N.
inline UnrootedFlow unrooted_unit_flow(const Tree& tree, const Vertex& v0, const Exponent& p, const Budget& budget = {},
                                       int period = 1) {
    if (period < 1) throw std::invalid_argument("period must be positive");
    Tree plus_tree = power_subtree(tree, v0, period);
    auto [minus_tree, lambda_minus] = derived_minus_tree(tree, v0, period);
    auto e_plus = std::make_shared<const ResistanceEngine>(plus_tree, p, budget);
    auto e_minus = std::make_shared<const ResistanceEngine>(minus_tree, p, budget);
    MinimalFlow fp = minimal_unit_flow_in(e_plus, v0, {FlowDomain{plus_tree, false}});
    MinimalFlow fm = minimal_unit_flow_in(e_minus, v0, {FlowDomain{minus_tree, false}});
    auto dsrc = std::dynamic_pointer_cast<const DerivedMinusSource>(minus_tree.source_ptr());
    Flow plus = fp.flow, minus = fm.flow;
    Tree amb = tree;
    const std::int64_t d0 = tree.source().depth(v0);
    auto gen = [plus, minus, dsrc, amb, v0, d0, period](const Flow& self, const Vertex& w) -> double {
        std::int64_t d = amb.source().depth(w) - d0;
        if (((d % period) + period) % period != 0) return 0.0;
        if (amb.is_descendant(w, v0)) {
            double x = plus(w);
            if (plus.status() != Status::Exact) self.degrade(plus.status(), plus.reason());
            return x;
        }
        if (!dsrc->contains(w)) return 0.0;
        double x = minus(w);
        if (minus.status() != Status::Exact) self.degrade(minus.status(), minus.reason());
        return dsrc->spine_index(w) ? x : -x;
    };
    Flow::Traits tr;
    tr.group_symmetric = true;
    tr.note = period == 1 ? "signed unit flow" : "periodic point of period " + std::to_string(period);
    Flow f(tree, ShiftForm::Unweighted, v0, gen, {FlowDomain{plus_tree, false}, FlowDomain{minus_tree, true}}, tr);
    UnrootedFlow out{f, fp, fm, {}, period, 0.0, Status::Unknown, {}};

    // energy = r_p(V^N(v0))^p + r_p(V_-^N(v0))^p - |mu_v0|^p, or the larger resistance for p = inf
    double m = std::abs(tree.mu(v0));
    auto combine = [&](double a, double b) {
        if (p.is_infinite()) return std::max(a, b);
        double pw = p.value();
        return std::pow(a, pw) + std::pow(b, pw) - std::pow(m, pw);
    };
    BoundEstimate& e = out.energy;
    e.tolerance = budget.tol;
    e.status = worse(fp.norm.status, fm.norm.status);
    e.value = combine(fp.norm.value, fm.norm.value);
    e.upper = combine(fp.norm.upper, fm.norm.upper);
    e.certificate = p.is_infinite() ? "max(r(V^N(v0)), r(V_-^N(v0)))" : "r_p(V^N(v0))^p + r_p(V_-^N(v0))^p - |mu_v0|^p";
    if (!fp.available || !fm.available) {
        e.value = kInf;
        e.status = Status::CertifiedInfinite;
        out.note = "a component resistance is infinite";
        f.degrade(Status::Unknown, out.note);
    }
    std::size_t n = std::min(fp.norm.evidence.size(), fm.norm.evidence.size());
    for (std::size_t i = 0; i < n; ++i)
        e.evidence.push_back({fp.norm.evidence[i].depth, combine(fp.norm.evidence[i].value, fm.norm.evidence[i].value)});

    // f along the spine toward -infinity
    std::vector<double> spine;
    for (std::int64_t k = 0; k <= 4 * budget.depth; ++k) {
        auto s = dsrc->spine(k);
        if (!s) break;
        spine.push_back(f(*s));
    }
    out.spine_limit = spine.back();
    std::size_t ns = spine.size();
    if (ns >= 1 && !dsrc->spine(std::int64_t(ns))) {
        out.spine_limit_status = Status::Exact;  // the spine ends at a root
    } else if (ns >= 16) {
        double rho = spine[ns - 1] / spine[ns - 2];
        bool geometric = std::abs(rho) < 1.0;
        bool constant = true;
        for (std::size_t k = ns / 2; k + 1 < ns; ++k) {
            geometric = geometric && spine[k] != 0.0 && std::abs(spine[k + 1] / spine[k] - rho) <= 1e-12;
            constant = constant && spine[k + 1] == spine[k];
        }
        if (geometric) {
            out.spine_limit = 0.0;
            out.spine_limit_status = Status::Exact;
        } else if (constant) {
            out.spine_limit_status = Status::Exact;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// The alternating flow on the full comb: spine (2n, 0) -> 1, (2n+1, 0) -> 0, the tooth
// emanating from (2n, 0) -> 1 and the one emanating from (2n+1, 0) -> -1.

inline Flow comb_alternating_flow(const Tree& comb) {
    if (!dynamic_cast<const CombSource*>(&comb.source()) || comb.rooted())
        throw std::invalid_argument("the alternating flow lives on the full comb");
    auto gen = [](const Flow&, const Vertex& v) -> double {
        auto even = [](std::int64_t n) { return ((n % 2) + 2) % 2 == 0; };
        if (v.b == 0) return even(v.a) ? 1.0 : 0.0;
        return even(v.a - v.b) ? 1.0 : -1.0;
    };
    Flow::Traits tr;
    tr.unbounded_generation_mass =
        "every generation meets all teeth emanating from earlier spine vertices, each carrying |f| = 1";
    tr.note = "alternating comb flow";
    return Flow(comb, ShiftForm::Unweighted, Vertex{0, 0, 0}, gen, {}, tr);
}

}  // namespace treeshift
