#include <catch_amalgamated.hpp>

#include <cmath>

#include <treeshift/constants.hpp>
#include <treeshift/document.hpp>
#include <treeshift/tree_ops.hpp>

using namespace treeshift;
using Catch::Approx;

namespace {

Tree two_branches(Rule upper, Rule lower) {
    return make_star(1.0, {Arm{1, Rule::constant(1), std::move(upper), kInf}, Arm{1, Rule::constant(1), std::move(lower), kInf}});
}

// Root with one unit branch and infinitely many further unit branches.
Tree fan() {
    return make_star(1.0, {Arm{kInf, Rule::constant(1), Rule::constant(1), kInf}});
}

// Backward recursion c^p = (sum_u r_u^{-p*})^{-p/p*} on an explicit finite tree.
double finite_c(const Tree& t, const Vertex& v, double p) {
    auto kids = t.children(v);
    if (kids.empty()) return 0.0;
    const double q = p / (p - 1);
    double s = 0.0;
    for (const auto& u : kids) {
        double c = finite_c(t, u, p);
        double r = std::pow(std::pow(std::abs(t.mu(u)), p) + std::pow(c, p), 1 / p);
        s += std::pow(r, -q);
    }
    return std::pow(s, -1 / q);
}

}  // namespace

TEST_CASE("single geometric branch has the closed-form tail norm", "[constants]") {
    Tree t = make_rooted_symmetric(Rule::constant(1), Rule::constant(2));
    BoundEstimate c = continued_fraction(t, Exponent(2));
    CHECK(c.status == Status::Exact);
    CHECK(c.value == Approx(1 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(continued_fraction(t, Exponent(1)).value == Approx(1.0).epsilon(1e-12));
    CHECK(continued_fraction(t, Exponent::infinity()).value == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("binary tree with unit weights", "[constants]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(1));
    BoundEstimate c = continued_fraction(t, Exponent(2));
    BoundEstimate r = resistance(t, Exponent(2));
    CHECK(c.status == Status::Exact);
    CHECK(c.value == Approx(1.0).epsilon(1e-12));
    CHECK(r.value == Approx(std::sqrt(2.0)).epsilon(1e-12));
    // x^2 = (1 + x^2) / 2 solved by iteration as an independent check
    double x = 0.0;
    for (int i = 0; i < 200; ++i) x = std::sqrt((1 + x * x) / 2);
    CHECK(c.value == Approx(x).epsilon(1e-12));
    CHECK(continued_fraction(t, Exponent::infinity()).value == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("unit half line diverges", "[constants]") {
    Tree t = make_rooted_symmetric(Rule::constant(1), Rule::constant(1));
    for (const auto& p : {Exponent(1), Exponent(2)}) {
        BoundEstimate c = continued_fraction(t, p);
        CHECK(c.status == Status::CertifiedInfinite);
        CHECK(std::isinf(c.value));
    }
}

TEST_CASE("infinitely many branches force the constant to zero", "[constants]") {
    Tree t = fan();
    for (double p : {1.5, 2.0, 4.0}) CHECK(continued_fraction(t, Exponent(p)).value == 0.0);
    BoundEstimate r = resistance(t, Exponent(2));
    CHECK(r.value == Approx(1.0));
}

TEST_CASE("two branches, one summable", "[constants]") {
    Tree t = two_branches(Rule::geometric(std::sqrt(0.5), std::sqrt(0.5)), Rule::constant(1));
    BoundEstimate r = resistance(t, Exponent(2));
    CHECK(r.value == Approx(std::sqrt(2.0)).epsilon(1e-9));
    CHECK(r.status != Status::Unknown);
}

TEST_CASE("singleton tree", "[constants]") {
    Tree t = parse_document(nlohmann::json::parse(R"({"kind": "finite", "vertices": [{"id": 0, "mu": "-3"}]})")).tree;
    for (const auto& p : {Exponent(1), Exponent(2), Exponent::infinity()}) {
        CHECK(continued_fraction(t, p).value == 0.0);
        CHECK(continued_fraction(t, p).status == Status::Exact);
        CHECK(resistance(t, p).value == Approx(3.0).epsilon(1e-14));
    }
}

TEST_CASE("finite trees agree with the explicit backward recursion", "[constants]") {
    Tree t = parse_document(nlohmann::json::parse(R"({"kind": "finite", "vertices": [
        {"id": 0, "mu": "1"}, {"id": 1, "parent": 0, "mu": "0.5"}, {"id": 2, "parent": 0, "mu": "2"},
        {"id": 3, "parent": 1, "mu": "0.25"}, {"id": 4, "parent": 1, "mu": "4"}, {"id": 5, "parent": 2, "mu": "1"},
        {"id": 6, "parent": 5, "mu": "-0.1"}]})"))
                 .tree;
    for (double p : {1.5, 2.0, 3.0, 7.0}) {
        BoundEstimate c = continued_fraction(t, Exponent(p));
        CHECK(c.status == Status::Exact);
        CHECK(c.value == Approx(finite_c(t, *t.root(), p)).epsilon(1e-12));
    }
    // p = 1: cheapest branch 0.5 + 0.25
    CHECK(continued_fraction(t, Exponent(1)).value == Approx(0.75).epsilon(1e-12));
    // p = inf: min over flows of the largest |f mu| off the root
    BoundEstimate ci = continued_fraction(t, Exponent::infinity());
    CHECK(ci.status == Status::Exact);
    CHECK(ci.value > 0.0);
}

TEST_CASE("subtree bound: c(V) <= (|mu_v|^p + c(V(v))^p)^(1/p) for each child", "[constants]") {
    Tree t = make_rooted_symmetric(Rule::table({3, 1, 2}, Rule::constant(2)), Rule::table({0.5, 2, 1}, Rule::constant(1.2)));
    for (double p : {1.5, 2.0, 3.0}) {
        double c = continued_fraction(t, Exponent(p)).value;
        for (const auto& v : t.children(*t.root())) {
            double cv = continued_fraction(t, Exponent(p), {}, v).value;
            CHECK(c <= std::pow(std::pow(std::abs(t.mu(v)), p) + std::pow(cv, p), 1 / p) * (1 + 1e-12));
        }
    }
}

TEST_CASE("evidence is nondecreasing and below the certified bound", "[constants]") {
    Tree t = make_rooted_symmetric(Rule::constant(3), Rule::constant(0.8));
    BoundEstimate c = continued_fraction(t, Exponent(2));
    REQUIRE(c.evidence.size() >= 3);
    for (std::size_t i = 1; i < c.evidence.size(); ++i) {
        CHECK(c.evidence[i].depth > c.evidence[i - 1].depth);
        CHECK(c.evidence[i].value >= c.evidence[i - 1].value);
    }
    CHECK(c.evidence.back().value <= c.upper);
}

TEST_CASE("branch expansion along a single branch", "[constants][branch]") {
    Tree t = make_rooted_symmetric(Rule::constant(1), Rule::constant(2));
    BranchExpansion be = branch_expansion(t, Exponent(2), first_child_branch(t, *t.root(), 10));
    REQUIRE(be.convergents.size() == 10);
    for (std::size_t m = 0; m < be.convergents.size(); ++m) {
        // all side trees are empty: d_m is the norm of the first m weights
        double s = 0.0;
        for (std::size_t n = 1; n <= m + 1; ++n) s += std::pow(4.0, -double(n));
        CHECK(be.convergents[m] == Approx(std::sqrt(s)).epsilon(1e-12));
        CHECK(be.side_terms[m] == 0.0);
    }
    CHECK(be.limit.value == Approx(1 / std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("branch expansion of the golden half comb", "[constants][branch]") {
    CombSpec spec;
    spec.half = true;
    spec.tooth = Rule::geometric(1, std::sqrt(0.5));
    Tree t = make_comb(spec);
    BranchExpansion be = branch_expansion(t, Exponent(2), first_child_branch(t, t.base(), 12));
    REQUIRE(be.convergents.size() == 12);
    // 1 + d_m^2 runs through the odd-indexed convergents 3/2, 8/5, 21/13, ... of phi
    double a = 1, b = 1;  // consecutive Fibonacci numbers
    for (double d : be.convergents) {
        double na = a + b, nb = na + b;  // F_{2k+1}, F_{2k+2}
        a = na;
        b = nb;
        CHECK(1 + d * d == Approx(b / a).epsilon(1e-12));
    }
    for (std::size_t i = 1; i < be.convergents.size(); ++i) CHECK(be.convergents[i] > be.convergents[i - 1]);
    const double phi = (1 + std::sqrt(5.0)) / 2;
    CHECK(be.convergents.back() * be.convergents.back() == Approx(1 / phi).epsilon(1e-9));
    CHECK(be.limit.value == Approx(std::sqrt(1 / phi)).epsilon(1e-12));
    CHECK(be.limit.status == Status::Exact);
}

TEST_CASE("branch expansion with an infinite fan at the root is zero", "[constants][branch]") {
    Tree t = make_star(1.0, {Arm{1, Rule::constant(1), Rule::constant(1), kInf},
                             Arm{kInf, Rule::constant(1), Rule::constant(1), kInf}});
    BranchExpansion be = branch_expansion(t, Exponent(2), first_child_branch(t, t.base(), 5));
    for (double d : be.convergents) CHECK(d == 0.0);
    CHECK(be.limit.value == 0.0);
}

TEST_CASE("branch expansion rejects non-branches", "[constants][branch]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(1));
    Vertex root = *t.root();
    auto kids = t.children(root);
    CHECK_THROWS_AS(branch_expansion(t, Exponent(2), {root}), std::invalid_argument);
    CHECK_THROWS_AS(branch_expansion(t, Exponent(2), {kids[0], kids[1]}), std::invalid_argument);
    CHECK_THROWS_AS(branch_expansion(t, Exponent(1), {root, kids[0]}), std::invalid_argument);
}
