#pragma once

// Brute-force minimizer of sum_{v != root} |f(v) mu_v|^p over unit flows on a finite tree,
// by damped Newton iteration on the free child values, in extended precision.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Real = long double;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

struct FiniteTree {
    std::vector<int> parent;  // parent[0] = -1
    std::vector<double> mu;
};

struct Minimizer {
    std::vector<double> f;
    double norm = 0.0;  // (sum_{v != root} |f mu|^p)^{1/p}
    int iterations = 0;
    bool converged = false;
};

inline FiniteTree random_tree(std::mt19937_64& rng, int max_vertices) {
    std::uniform_int_distribution<int> size(2, max_vertices);
    std::uniform_real_distribution<double> logw(std::log(1e-2), std::log(1e2));
    FiniteTree t;
    int n = size(rng);
    t.parent.assign(std::size_t(n), -1);
    for (int i = 1; i < n; ++i) t.parent[std::size_t(i)] = std::uniform_int_distribution<int>(0, i - 1)(rng);
    for (int i = 0; i < n; ++i) t.mu.push_back(std::exp(logw(rng)));
    return t;
}

inline Minimizer minimize(const FiniteTree& t, double p) {
    const int n = int(t.parent.size());
    std::vector<std::vector<int>> kids(static_cast<std::size_t>(n));
    for (int i = 1; i < n; ++i) kids[std::size_t(t.parent[std::size_t(i)])].push_back(i);
    // f = A x + b, with x the values of all but the last child of each vertex
    std::vector<int> var_of(std::size_t(n), -1);
    int m = 0;
    for (int v = 0; v < n; ++v)
        for (std::size_t k = 0; k + 1 < kids[std::size_t(v)].size(); ++k) var_of[std::size_t(kids[std::size_t(v)][k])] = m++;
    Matrix A = Matrix::Zero(n, std::max(m, 1));
    Vector b = Vector::Zero(n);
    b(0) = 1;
    std::vector<int> order{0};
    for (std::size_t i = 0; i < order.size(); ++i) {
        int v = order[i];
        const auto& ks = kids[std::size_t(v)];
        if (ks.empty()) continue;
        Vector rest_a = A.row(v).transpose();
        Real rest_b = b(v);
        for (std::size_t k = 0; k < ks.size(); ++k) {
            int u = ks[k];
            if (k + 1 < ks.size()) {
                A(u, var_of[std::size_t(u)]) = 1.0;
                rest_a(var_of[std::size_t(u)]) -= 1.0;
            } else {
                A.row(u) = rest_a.transpose();
                b(u) = rest_b;
            }
            order.push_back(u);
        }
    }
    Vector w(n);
    for (int v = 0; v < n; ++v) w(v) = v == 0 ? 0 : std::pow(Real(t.mu[std::size_t(v)]), Real(p));

    auto objective = [&](const Vector& x) {
        Vector y = A * x + b;
        Real s = 0;
        for (int v = 1; v < n; ++v) s += w(v) * std::pow(std::abs(y(v)), Real(p));
        return s;
    };
    // start from the equal split
    Vector x = Vector::Zero(A.cols());
    {
        std::vector<double> f(std::size_t(n), 0.0);
        f[0] = 1.0;
        for (int v : order)
            for (int u : kids[std::size_t(v)]) {
                f[std::size_t(u)] = f[std::size_t(v)] / double(kids[std::size_t(v)].size());
                if (var_of[std::size_t(u)] >= 0) x(var_of[std::size_t(u)]) = f[std::size_t(u)];
            }
    }
    Minimizer out;
    if (m > 0) {
        for (int it = 0; it < 200; ++it) {
            Vector y = A * x + b;
            Vector g1(n), h1(n);
            for (int v = 0; v < n; ++v) {
                Real a = std::max(std::abs(y(v)), Real(1e-300));
                g1(v) = w(v) * p * std::pow(a, Real(p - 1)) * (y(v) < 0 ? -1 : 1);
                h1(v) = w(v) * p * (p - 1) * std::pow(a, Real(p - 2));
            }
            Vector grad = A.transpose() * g1;
            Matrix hess = A.transpose() * h1.asDiagonal() * A;
            Vector step = hess.ldlt().solve(-grad);
            Real decrement = -grad.dot(step);
            out.iterations = it + 1;
            // below these the objective cannot resolve further progress; take the last step
            if (!(decrement > 1e-18L * objective(x)) || (A * step).lpNorm<Eigen::Infinity>() <= 1e-12L) {
                x += step;
                out.converged = true;
                break;
            }
            Real fx = objective(x), s = 1;
            while (s > 1e-20L && !(objective(x + s * step) <= fx - s * decrement / 4)) s /= 2;
            if (s <= 1e-20L) {
                out.converged = true;
                break;
            }
            x += s * step;
        }
    } else {
        out.converged = true;
    }
    Vector y = A * x + b;
    for (int v = 0; v < n; ++v) out.f.push_back(double(y(v)));
    out.norm = double(std::pow(objective(x), Real(1) / Real(p)));
    return out;
}

}  // namespace oracle
