#include <catch_amalgamated.hpp>

#include <cmath>

#include <treeshift/capacity.hpp>

using namespace treeshift;
using Catch::Approx;

TEST_CASE("rooted binary tree has capacity one half", "[capacity]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(1));
    CapacityReport c = boundary_capacity(t, 2.0);
    CHECK(c.value.value == Approx(0.5).epsilon(1e-12));
    CHECK(c.r_plus_power == Approx(2.0).epsilon(1e-12));
    CHECK(c.equilibrium.has_value());
    CHECK(c.spine_limit == 1.0);
}

TEST_CASE("capacity of order three on the binary tree", "[capacity]") {
    // q* = 3/2: x = c^(3/2) solves x = 2^(-1/2) (1 + x), so r^(3/2) = 1 + x = 2 + sqrt 2
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(1));
    CapacityReport c = boundary_capacity(t, 3.0);
    CHECK(c.q_dual == Approx(1.5));
    CHECK(c.r_plus_power == Approx(2 + std::sqrt(2.0)).epsilon(1e-10));
    CHECK(c.value.value == Approx(std::pow(2 + std::sqrt(2.0), -2.0)).epsilon(1e-10));
}

TEST_CASE("unrooted binary tree has capacity one third", "[capacity]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    CapacityReport c = capacity_with_basepoint(t, t.base(), 2.0);
    CHECK(c.r_plus_power == Approx(2.0).epsilon(1e-12));
    CHECK(c.r_minus_power == Approx(2.0).epsilon(1e-12));
    CHECK(c.basepoint_power == Approx(1.0));
    CHECK(c.value.value == Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(c.spine_limit == 0.0);
}

TEST_CASE("two-sided geometric line", "[capacity]") {
    Tree z = make_unrooted_symmetric(Rule::constant(1), Rule::table({0.5}, Rule::constant(2)), Rule::constant(1),
                                     Rule::constant(0.5));
    CapacityReport c = capacity_with_basepoint(z, z.base(), 2.0);
    CHECK(c.value.value == Approx(0.6).epsilon(1e-9));
    CHECK(c.spine_limit == Approx(1.0));
}

TEST_CASE("half line with unit weights has zero capacity", "[capacity]") {
    Tree t = make_rooted_symmetric(Rule::constant(1), Rule::constant(1));
    CapacityReport c = boundary_capacity(t, 2.0);
    CHECK(c.value.value == 0.0);
    CHECK(c.value.status == Status::Exact);
    CHECK_FALSE(c.equilibrium.has_value());
}

TEST_CASE("a single summable branch carries all the capacity", "[capacity]") {
    Tree t = make_star(1.0, {Arm{1, Rule::constant(1), Rule::geometric(std::sqrt(0.5), std::sqrt(0.5)), kInf},
                             Arm{1, Rule::constant(1), Rule::constant(1), kInf}});
    CHECK(boundary_capacity(t, 2.0).value.value == Approx(0.5).epsilon(1e-9));
}

TEST_CASE("root basepoint agrees with the rooted formula", "[capacity]") {
    for (const Tree& t : {make_rooted_symmetric(Rule::constant(2), Rule::constant(1)),
                          make_rooted_symmetric(Rule::table({3, 1}, Rule::constant(2)), Rule::constant(0.9)),
                          make_rooted_symmetric(Rule::constant(1), Rule::constant(2))}) {
        for (double q : {1.5, 2.0, 4.0}) {
            double a = boundary_capacity(t, q).value.value;
            double b = capacity_with_basepoint(t, *t.root(), q).value.value;
            CHECK(a == Approx(b).epsilon(1e-12));
        }
    }
}

TEST_CASE("capacity order and basepoint are validated", "[capacity]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(1));
    CHECK_THROWS_AS(boundary_capacity(t, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(boundary_capacity(t, kInf), std::invalid_argument);
    CHECK_THROWS_AS(boundary_capacity(make_unrooted_symmetric(Rule::constant(2), Rule::constant(1)), 2.0),
                    std::invalid_argument);
}
