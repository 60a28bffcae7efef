#pragma once

#include <cmath>

namespace treeshift {

// Asymptotic shape a*n^2 + b*n*log(n) + c*n + d*log(n) + O(1) of a log-scale sequence.
// The O(1) remainder is bounded for every rule kind, so the leading nonzero
// coefficient decides limits and summability.
struct Growth {
    double quadratic = 0.0;
    double n_log_n = 0.0;
    double linear = 0.0;
    double log_n = 0.0;

    static constexpr double kZero = 1e-12;

    Growth operator+(const Growth& o) const {
        return {quadratic + o.quadratic, n_log_n + o.n_log_n, linear + o.linear, log_n + o.log_n};
    }
    Growth operator*(double s) const { return {quadratic * s, n_log_n * s, linear * s, log_n * s}; }
    Growth operator-() const { return *this * -1.0; }

    // The same sequence read at n + s.
    Growth shifted(double s) const {
        return {quadratic, n_log_n, linear + 2.0 * quadratic * s, log_n + n_log_n * s};
    }

    // +1 if the sequence tends to +inf, -1 if to -inf, 0 if it stays bounded.
    int limit_sign() const {
        for (double x : {quadratic, n_log_n, linear, log_n}) {
            if (x > kZero) return 1;
            if (x < -kZero) return -1;
        }
        return 0;
    }

    // Whether sum_n exp(sequence(n)) converges.
    bool exp_summable() const {
        for (double x : {quadratic, n_log_n, linear}) {
            if (x > kZero) return false;
            if (x < -kZero) return true;
        }
        return log_n < -1.0 - kZero;
    }
};

}  // namespace treeshift
