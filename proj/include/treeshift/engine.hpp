#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <unordered_map>

#include "bound.hpp"
#include "tree.hpp"

namespace treeshift {

struct SeriesResult {
    double log_value = kInf;  // log of the normalized constant; +inf when divergent
    bool certified = true;    // false when the tail was cut numerically
};

// Normalized constant c_p(V(v)) / |mu_v| of a rooted symmetric tree whose top vertex
// sits in generation `start` (children counts gamma(n), operator weights lambda(n+1)).
// For p < inf this is (sum_{k>=1} 1 / ((gamma_s...gamma_{s+k-1})^{p-1} |lambda_{s+1}...lambda_{s+k}|^p))^{1/p},
// for p = inf it is sup_{k>=1} prod_{i=1..k} 1 / (gamma_{s+i-1} |lambda_{s+i}|).
inline SeriesResult symmetric_log_chat(const Rule& gamma, const Rule& lambda, std::int64_t start, const Exponent& p) {
    constexpr std::int64_t kMaxTerms = 2'000'000;
    auto sg = gamma.value_stationary_from();
    auto sl = lambda.value_stationary_from();
    auto stationary_at = [&](std::int64_t k) { return sg && sl && start + k >= *sg && start + k + 1 >= *sl; };

    if (p.is_infinite()) {
        Growth g = -(gamma.log_sum_growth().shifted(double(start)) + lambda.log_sum_growth().shifted(double(start + 1)));
        if (g.limit_sign() > 0) return {kInf, true};
        double M = 0.0, best = -kInf;
        for (std::int64_t k = 1; k <= kMaxTerms; ++k) {
            M -= std::log(gamma.at(start + k - 1)) + lambda.log_abs_at(start + k);
            best = std::max(best, M);
            if (stationary_at(k)) {
                double step = -(std::log(gamma.at(start + k)) + lambda.log_abs_at(start + k + 1));
                if (step > 0.0) return {kInf, true};
                return {best, true};
            }
            if (k >= 64 && g.limit_sign() < 0 && M < best - 60.0) return {best, false};
        }
        return {best, false};
    }

    double pw = p.value();
    Growth g = gamma.log_sum_growth().shifted(double(start)) * (-(pw - 1.0)) +
               lambda.log_sum_growth().shifted(double(start + 1)) * (-pw);
    if (!g.exp_summable()) return {kInf, true};
    double L = 0.0, acc = -kInf;
    for (std::int64_t k = 1; k <= kMaxTerms; ++k) {
        L += -(pw - 1.0) * std::log(gamma.at(start + k - 1)) - pw * lambda.log_abs_at(start + k);
        acc = log_add(acc, L);
        if (stationary_at(k)) {
            double lt = -(pw - 1.0) * std::log(gamma.at(start + k)) - pw * lambda.log_abs_at(start + k + 1);
            if (lt >= 0.0) return {kInf, true};
            acc = log_add(acc, L + lt - std::log(-std::expm1(lt)));
            return {acc / pw, true};
        }
        if (k >= 64 && L < acc - 60.0) return {acc / pw, false};
    }
    return {acc / pw, false};
}

// Normalized constant of a single branch with |mu_{v_n}| / |mu_v| = |w(start+n) / w(start)|.
inline double branch_log_chat(const BranchTail& t, const Exponent& p) {
    double base = t.weights.log_abs_at(t.start);
    if (p.is_infinite()) {
        double sup = t.weights.abs_supremum_from(t.start + 1);
        if (std::isinf(sup)) return kInf;
        return std::log(sup) - base;
    }
    auto s = t.weights.abs_power_series(p.value(), t.start + 1);
    if (!s.finite) return kInf;
    return std::log(s.value) / p.value() - base;
}

// Evaluates c_p on descendant trees V(v) in ratio form. Two passes share one memo:
// truncation (frontier vertices become leaves, giving c_p(V_m)) and interval bounds
// (frontier resistance anywhere in [1, inf], closed forms at declared tails).
class ResistanceEngine {
public:
    struct LogInterval {
        double lo;
        double hi;
    };

    ResistanceEngine(Tree tree, Exponent p, Budget budget = {})
        : tree_(std::move(tree)), p_(p), budget_(budget) {}

    const Tree& tree() const { return tree_; }
    const Exponent& exponent() const { return p_; }
    const Budget& budget() const { return budget_; }
    std::int64_t expansions() const { return expansions_.load(); }

    // log(c_p(V_m(v)) / |mu_v|)
    double log_truncated(const Vertex& v, int m) const { return eval(v, m, Mode::Truncate).lo; }

    // Certified enclosure of log(c_p(V(v)) / |mu_v|) from depth m below v.
    LogInterval log_bounds(const Vertex& v, int m) const { return eval(v, m, Mode::Bound); }

    // log(r/|mu|) from log(c/|mu|).
    double log_r_from_c(double log_c) const {
        if (log_c == kInf) return kInf;
        if (p_.is_infinite()) return std::max(0.0, log_c);
        return softplus(p_.value() * log_c) / p_.value();
    }

    LogInterval log_r_hat(const Vertex& v) const {
        auto b = log_bounds(v, budget_.depth);
        return {log_r_from_c(b.lo), log_r_from_c(b.hi)};
    }

    // c_p(V(v)) / |mu_v|
    BoundEstimate normalized(const Vertex& v) const { return estimate(v, 1.0); }

    BoundEstimate continued_fraction(const Vertex& v) const { return estimate(v, std::abs(tree_.mu(v))); }
    BoundEstimate continued_fraction() const { return continued_fraction(tree_.base()); }

    BoundEstimate resistance(const Vertex& v) const {
        double m = std::abs(tree_.mu(v));
        BoundEstimate c = continued_fraction(v);
        auto to_r = [&](double x) {
            if (std::isinf(x)) return kInf;
            if (p_.is_infinite()) return std::max(m, x);
            double pw = p_.value();
            return std::pow(std::pow(m, pw) + std::pow(x, pw), 1.0 / pw);
        };
        BoundEstimate r = c;
        r.value = to_r(c.value);
        r.upper = to_r(c.upper);
        for (auto& e : r.evidence) e.value = to_r(e.value);
        if (r.evidence.size() >= 2)
            r.last_increment = r.evidence.back().value - r.evidence[r.evidence.size() - 2].value;
        return r;
    }
    BoundEstimate resistance() const { return resistance(tree_.base()); }

    // Cached point estimates of log(c_p(V(v))/|mu_v|) and log(r_p(V(v))/|mu_v|).
    struct HatValue {
        double log_c = -kInf;
        double log_r = 0.0;
        Status status = Status::Unknown;
    };

    HatValue hat(const Vertex& v) const {
        Key key = key_for(v, -2, Mode::Truncate);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = hats_.find(key);
            if (it != hats_.end()) return it->second;
        }
        BoundEstimate e = normalized(v);
        HatValue h;
        h.log_c = e.status == Status::CertifiedInfinite ? kInf : safe_log_abs(e.value);
        h.log_r = log_r_from_c(h.log_c);
        h.status = e.status;
        std::lock_guard<std::mutex> lock(mu_);
        hats_.emplace(key, h);
        return h;
    }

    struct GroupFactor {
        bool forces_zero = false;
        double log_mass = 0.0;  // log sum_i |s_i/s_0|^{-q}, or log inf_i |s_i/s_0| for p = 1
    };

    GroupFactor group_factor(const ChildGroup& g) const {
        GroupFactor f;
        bool one = p_.is_one();
        double q = p_.is_infinite() ? 1.0 : p_.conjugate();
        if (g.kind != ChildGroup::Kind::Scaled || !g.scale) {
            if (one) return f;
            if (g.infinite()) f.forces_zero = true;
            else f.log_mass = std::log(g.count);
            return f;
        }
        const Rule& s = *g.scale;
        double ls0 = s.log_abs_at(0);
        if (g.infinite()) {
            if (one) {
                double inf = s.abs_infimum_from(0);
                f.log_mass = inf == 0.0 ? -kInf : std::log(inf) - ls0;
            } else {
                auto ser = s.abs_power_series(-q, 0);
                if (!ser.finite) f.forces_zero = true;
                else f.log_mass = std::log(ser.value) + q * ls0;
            }
            return f;
        }
        double acc = one ? kInf : -kInf;
        for (std::int64_t i = 0; i < std::int64_t(g.count); ++i) {
            double li = s.log_abs_at(i) - ls0;
            acc = one ? std::min(acc, li) : log_add(acc, -q * li);
        }
        f.log_mass = acc;
        return f;
    }

private:
    enum class Mode { Truncate = 0, Bound = 1 };
    using Key = std::array<std::int64_t, 7>;
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = 1469598103934665603ull;
            for (auto x : k) {
                h ^= std::uint64_t(x);
                h *= 1099511628211ull;
            }
            return std::size_t(h);
        }
    };

    Key key_for(const Vertex& v, int d, Mode mode) const {
        if (auto s = tree_.source().shape(v)) return {std::int64_t(mode), 1, (*s)[0], (*s)[1], (*s)[2], (*s)[3], d};
        return {std::int64_t(mode), 0, v.a, v.b, v.c, 0, d};
    }

    // Cached under depth -1; NaN marks vertices without a closed form.
    std::optional<double> closed_form(const Vertex& v) const {
        Key key = key_for(v, -1, Mode::Bound);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = memo_.find(key);
            if (it != memo_.end()) {
                if (std::isnan(it->second.lo)) return std::nullopt;
                return it->second.lo;
            }
        }
        const auto& src = tree_.source();
        double value = std::numeric_limits<double>::quiet_NaN();
        if (auto t = src.branch_tail(v)) {
            value = branch_log_chat(*t, p_);
        } else if (auto t = src.symmetric_tail(v)) {
            auto s = symmetric_log_chat(t->gamma, t->lambda, t->start, p_);
            if (s.certified) value = s.log_value;
        }
        std::lock_guard<std::mutex> lock(mu_);
        memo_.emplace(key, LogInterval{value, value});
        if (std::isnan(value)) return std::nullopt;
        return value;
    }

    LogInterval eval(const Vertex& v, int d, Mode mode) const {
        if (mode == Mode::Bound) {
            if (auto c = closed_form(v)) return {*c, *c};
        }
        Key key = key_for(v, d, mode);
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = memo_.find(key);
            if (it != memo_.end()) return it->second;
        }
        if (++expansions_ > budget_.vertices) throw BudgetExceeded("vertex budget exhausted");
        auto groups = tree_.source().children(v);
        LogInterval out;
        if (groups.empty()) out = {-kInf, -kInf};
        else if (d <= 0) out = mode == Mode::Truncate ? LogInterval{-kInf, -kInf} : LogInterval{-kInf, kInf};
        else out = combine(groups, d - 1, mode);
        std::lock_guard<std::mutex> lock(mu_);
        memo_.emplace(key, out);
        return out;
    }

    LogInterval combine(const std::vector<ChildGroup>& groups, int d, Mode mode) const {
        const auto& src = tree_.source();
        bool one = p_.is_one();
        double q = p_.conjugate();
        double lse_lo = -kInf, lse_hi = -kInf, min_lo = kInf, min_hi = kInf;
        bool zero = false;
        for (const auto& g : groups) {
            if (g.count <= 0.0) continue;
            GroupFactor f = group_factor(g);
            if (f.forces_zero) {
                zero = true;
                continue;
            }
            Vertex m0 = g.member(0);
            double lrho = std::log(std::abs(src.ratio(m0)));
            LogInterval c = eval(m0, d, mode);
            double rlo = log_r_from_c(c.lo), rhi = log_r_from_c(c.hi);
            if (one) {
                if (f.log_mass == -kInf) {
                    min_lo = min_hi = -kInf;
                    continue;
                }
                min_lo = std::min(min_lo, lrho + f.log_mass + rlo);
                min_hi = std::min(min_hi, lrho + f.log_mass + rhi);
            } else {
                if (rlo < kInf) lse_lo = log_add(lse_lo, f.log_mass - q * (lrho + rlo));
                if (rhi < kInf) lse_hi = log_add(lse_hi, f.log_mass - q * (lrho + rhi));
            }
        }
        if (one) return {min_lo, min_hi};
        if (zero) return {-kInf, -kInf};
        auto fin = [q](double lse) { return lse == -kInf ? kInf : -lse / q; };
        return {fin(lse_lo), fin(lse_hi)};
    }

    BoundEstimate estimate(const Vertex& v, double scale) const {
        // tolerance relative to |mu_v|
        BoundEstimate est;
        const double tol = budget_.tol * scale;
        est.tolerance = tol;
        const int D = budget_.depth;
        std::vector<int> schedule;
        for (int m = 1; m < D; m *= 2) schedule.push_back(m);
        schedule.push_back(D);
        bool exhausted = false;
        auto push = [&](int m) {
            double lc = log_truncated(v, m);
            est.evidence.push_back({m, scale * safe_exp(lc)});
        };
        try {
            for (int m : schedule) push(m);
        } catch (const BudgetExceeded&) {
            exhausted = true;
        }
        LogInterval b{-kInf, kInf};
        int reached = est.evidence.empty() ? 0 : est.evidence.back().depth;
        const int deepest = std::max(1024, D);
        try {
            int m = std::max(reached, 1);
            b = log_bounds(v, m);
            // deepen the enclosure while it is still wide
            while (b.hi < kInf && scale * (safe_exp(b.hi) - safe_exp(b.lo)) > tol && m < deepest) {
                m *= 2;
                b = log_bounds(v, m);
            }
        } catch (const BudgetExceeded&) {
            exhausted = true;
        }
        double last = est.evidence.empty() ? 0.0 : est.evidence.back().value;
        if (est.evidence.size() >= 2) est.last_increment = last - est.evidence[est.evidence.size() - 2].value;
        else if (est.evidence.size() == 1) est.last_increment = last;

        if (b.lo == kInf) {
            est.value = kInf;
            est.upper = kInf;
            est.status = Status::CertifiedInfinite;
            est.certificate = "divergent closed-form tail";
            return est;
        }
        double lo = scale * safe_exp(b.lo), hi = scale * safe_exp(b.hi);
        est.value = std::max(lo, last);
        est.upper = hi;
        if (hi - lo <= tol) {
            // the enclosure is tight; push the truncation evidence until it agrees
            int m = reached;
            try {
                while (std::abs(est.value - est.evidence.back().value) > tol && m < deepest) {
                    m *= 2;
                    push(m);
                }
            } catch (const BudgetExceeded&) {
                exhausted = true;
            }
            if (est.evidence.size() >= 2)
                est.last_increment = est.evidence.back().value - est.evidence[est.evidence.size() - 2].value;
            if (std::abs(est.value - est.evidence.back().value) <= tol) {
                est.status = Status::Exact;
                est.certificate = "enclosure width " + format_double(hi - lo);
                return est;
            }
            est.status = Status::LowerBound;
            est.certificate = "enclosure tight, truncations lag";
            return est;
        }
        if (est.last_increment <= tol && !est.evidence.empty()) {
            est.status = Status::LowerBound;
            est.certificate = exhausted ? "budget exhausted; last increment small" : "last increment small";
        } else {
            est.status = Status::Unknown;
            est.certificate = exhausted ? "budget exhausted" : "truncations still increasing";
        }
        return est;
    }

    Tree tree_;
    Exponent p_;
    Budget budget_;
    mutable std::mutex mu_;
    mutable std::unordered_map<Key, LogInterval, KeyHash> memo_;
    mutable std::unordered_map<Key, HatValue, KeyHash> hats_;
    mutable std::atomic<std::int64_t> expansions_{0};
};

}  // namespace treeshift
