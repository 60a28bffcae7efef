#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace treeshift {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// An exponent p in [1, inf] together with its conjugate p* (1/p + 1/p* = 1).
class Exponent {
public:
    explicit Exponent(double p) : p_(p) {
        if (!(p >= 1.0)) throw std::invalid_argument("exponent must satisfy p >= 1");
    }
    static Exponent infinity() { return Exponent(kInf); }

    double value() const { return p_; }
    double conjugate() const {
        if (p_ == 1.0) return kInf;
        if (std::isinf(p_)) return 1.0;
        return p_ / (p_ - 1.0);
    }
    bool is_one() const { return p_ == 1.0; }
    bool is_infinite() const { return std::isinf(p_); }
    Exponent dual() const { return Exponent(conjugate()); }

    friend bool operator==(const Exponent&, const Exponent&) = default;

private:
    double p_;
};

// log(exp(a) + exp(b)) without overflow; -inf is the neutral element.
inline double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    if (a == kInf || b == kInf) return kInf;
    double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

// log(1 + exp(x))
inline double softplus(double x) {
    if (x == -kInf) return 0.0;
    if (x > 35.0) return x + std::exp(-x);
    return std::log1p(std::exp(x));
}

inline double safe_exp(double x) { return x == -kInf ? 0.0 : std::exp(x); }

inline double safe_log_abs(double x) { return x == 0.0 ? -kInf : std::log(std::abs(x)); }

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace treeshift
