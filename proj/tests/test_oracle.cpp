#include <catch_amalgamated.hpp>

#include <cmath>

#include <treeshift/flows.hpp>

#include "convex_oracle.hpp"

using namespace treeshift;
using Catch::Approx;

namespace {

Tree to_tree(const oracle::FiniteTree& ft) {
    std::vector<FiniteEntry> entries;
    for (std::size_t v = 0; v < ft.parent.size(); ++v) {
        FiniteEntry e;
        e.id = std::int64_t(v);
        if (ft.parent[v] >= 0) e.parent = ft.parent[v];
        e.weight = ft.mu[v];
        entries.push_back(e);
    }
    return make_finite(entries, WeightRole::Space, true);
}

}  // namespace

TEST_CASE("oracle splits a cherry evenly", "[oracle]") {
    oracle::FiniteTree t{{-1, 0, 0}, {1, 1, 1}};
    oracle::Minimizer m = oracle::minimize(t, 2.0);
    REQUIRE(m.converged);
    CHECK(m.f[0] == 1.0);
    CHECK(m.f[1] == Approx(0.5).epsilon(1e-10));
    CHECK(m.f[2] == Approx(0.5).epsilon(1e-10));
    CHECK(m.norm == Approx(std::sqrt(0.5)).epsilon(1e-10));
}

TEST_CASE("oracle weights branches by inverse resistance", "[oracle]") {
    // p = 2, weights 1 and 2 on the two leaves: f proportional to 1/mu^2
    oracle::FiniteTree t{{-1, 0, 0}, {1, 1, 2}};
    oracle::Minimizer m = oracle::minimize(t, 2.0);
    REQUIRE(m.converged);
    CHECK(m.f[1] == Approx(0.8).epsilon(1e-10));
    CHECK(m.f[2] == Approx(0.2).epsilon(1e-10));
}

TEST_CASE("oracle and minimal flows agree on random trees", "[oracle]") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 40; ++i) {
        oracle::FiniteTree ft = oracle::random_tree(rng, 10);
        Tree t = to_tree(ft);
        for (double p : {1.5, 2.0, 3.0}) {
            oracle::Minimizer ref = oracle::minimize(ft, p);
            REQUIRE(ref.converged);
            MinimalFlow mf = minimal_unit_flow(t, Exponent(p));
            CHECK(mf.off_root.value == Approx(ref.norm).epsilon(1e-6));
            for (std::size_t v = 0; v < ft.parent.size(); ++v)
                CHECK(mf.flow(*t.source().parse_vertex(std::to_string(v))) == Approx(ref.f[v]).margin(1e-5));
        }
    }
}
