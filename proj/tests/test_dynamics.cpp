#include <catch_amalgamated.hpp>

#include <cmath>

#include <treeshift/document.hpp>
#include <treeshift/dynamics.hpp>

using namespace treeshift;
using Catch::Approx;

namespace {

Tree binary(double lambda = 1.0) { return make_rooted_symmetric(Rule::constant(2), Rule::constant(lambda)); }

Tree finite(const char* vertices) {
    return parse_document(nlohmann::json::parse(std::string(R"({"kind": "finite", "vertices": )") + vertices + "}")).tree;
}

}  // namespace

TEST_CASE("shifting a point mass moves it toward the root", "[shift]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(3));
    Vertex root = *t.root();
    Vertex child = t.children(root).front();
    Vertex grandchild = t.children(child).back();

    Sparse f{{grandchild, 1.0}};
    Sparse once = apply_shift(t, ShiftForm::Unweighted, f, 1);
    REQUIRE(once.size() == 1);
    CHECK(once.at(child) == 1.0);
    Sparse twice = apply_shift(t, ShiftForm::Weighted, f, 2);
    CHECK(twice.at(root) == Approx(9.0));
    CHECK(apply_shift(t, ShiftForm::Unweighted, f, 3).empty());

    Sparse siblings{{t.children(child).front(), 1.0}, {grandchild, 2.0}};
    CHECK(apply_shift(t, ShiftForm::Unweighted, siblings, 1).at(child) == 3.0);
    CHECK_THROWS_AS(apply_shift(t, ShiftForm::Unweighted, f, -1), std::invalid_argument);
}

TEST_CASE("lazy shifted values agree with the sparse shift", "[shift]") {
    Tree t = binary(1.5);
    Flow g(t, ShiftForm::Weighted, *t.root(), [](const Flow& self, const Vertex& v) {
        return 1.0 + double(self.tree().level(v));
    });
    Vertex root = *t.root();
    Sparse s;
    auto gm = generations(t, root, 2, 2);
    for (const auto& v : gm.generations.at(2).vertices) s[v] = g(v);
    auto lazy = shifted_value(g, root, 2, ShiftForm::Weighted);
    REQUIRE(lazy);
    CHECK(*lazy == Approx(apply_shift(t, ShiftForm::Weighted, s, 2).at(root)));
}

TEST_CASE("operator definedness on locally finite and fan trees", "[operator]") {
    OperatorCheck ok = operator_defined_check(binary(), SpaceSpec::ell(2));
    CHECK(ok.defined.yes());
    CHECK(ok.bounded.yes());
    REQUIRE(ok.bound);
    CHECK(*ok.bound == Approx(std::sqrt(2.0)));

    Tree fan = make_star(1.0, {Arm{kInf, Rule::constant(1), Rule::constant(1), kInf}});
    OperatorCheck bad = operator_defined_check(fan, SpaceSpec::ell(2));
    CHECK(bad.defined.no());
    CHECK(bad.bounded.no());
}

TEST_CASE("Rolewicz operators switch at the threshold", "[classify]") {
    // 2^(-1/2) on l^2, 1/2 on c0
    CHECK(rolewicz_classify({2, true}, 0.70, SpaceSpec::ell(2)).no());
    CHECK(rolewicz_classify({2, true}, 0.72, SpaceSpec::ell(2)).yes());
    CHECK(rolewicz_classify({2, true}, 0.49, SpaceSpec::c0()).no());
    CHECK(rolewicz_classify({2, true}, 0.51, SpaceSpec::c0()).yes());
    CHECK(rolewicz_classify({1, true}, 1.0, SpaceSpec::ell(1)).no());
    CHECK(rolewicz_classify({1, true}, 1.01, SpaceSpec::ell(1)).yes());
    CHECK_THROWS_AS(rolewicz_classify({0, true}, 2.0, SpaceSpec::ell(2)), std::invalid_argument);
}

TEST_CASE("classification of symmetric trees", "[classify]") {
    CHECK(classify_chaos(binary(), SpaceSpec::ell(2)).yes());
    CHECK(classify_chaos(binary(0.5), SpaceSpec::ell(2)).no());
    CHECK(classify_chaos(make_rooted_symmetric(Rule::constant(1), Rule::constant(1)), SpaceSpec::ell(2)).no());
    CHECK(classify_chaos(make_rooted_symmetric(Rule::constant(1), Rule::constant(2)), SpaceSpec::ell(2)).yes());
}

TEST_CASE("classification of the two decaying combs on l^1", "[classify][comb]") {
    CombSpec spine;
    spine.spine_right = Rule::geometric(1.0, 0.5);
    CombSpec tooth;
    tooth.tooth = Rule::geometric(1.0, 0.5);
    Verdict vs = classify_chaos(make_comb(spine), SpaceSpec::ell(1));
    Verdict vt = classify_chaos(make_comb(tooth), SpaceSpec::ell(1));
    CHECK(vs.no());
    CHECK_FALSE(vs.certificate.empty());
    CHECK(vt.yes());
}

TEST_CASE("finite trees with leaves are never chaotic", "[classify]") {
    Tree t = finite(R"([{"id": 0}, {"id": 1, "parent": 0, "lambda": "2"}, {"id": 2, "parent": 0, "lambda": "2"}])");
    for (const auto& s : {SpaceSpec::ell(1), SpaceSpec::ell(2), SpaceSpec::c0()}) CHECK(classify_chaos(t, s).no());
}

TEST_CASE("periodic points are periodic and pass through the vertex", "[periodic]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    const Vertex v = t.base();
    for (int period : {1, 2, 3}) {
        PeriodicPoint pp = periodic_point(t, v, period, SpaceSpec::ell(2));
        CHECK(pp.point(v) == 1.0);
        auto ball = vertex_ball(t, v, 5, 2048).vertices;
        ResidualReport r = periodic_residual(pp.point, period, ball, 1e-12);
        CHECK(r.invariant());
        CHECK(r.checked > 0);
        CHECK(std::isfinite(pp.distance.value));
    }
    CHECK_THROWS_AS(periodic_point_from_flow(minimal_unit_flow(binary(), Exponent(2)).flow, *binary().root(), 0),
                    std::invalid_argument);
}

TEST_CASE("longer periods give closer periodic points on the binary tree", "[periodic]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    double prev = kInf;
    for (int period = 1; period <= 6; ++period) {
        double d = periodic_point(t, t.base(), period, SpaceSpec::ell(2)).distance.value;
        CHECK(d < prev);
        prev = d;
    }
}

TEST_CASE("universal fixed point from minimal flows", "[fixed]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    auto order = vertex_ball(t, t.base(), 2).vertices;
    auto check = vertex_ball(t, t.base(), 4, 4096).vertices;
    UniversalFixedPoint u = universal_fixed_point(t, order, minimal_fixed_points(t, SpaceSpec::ell(2)), check, 1e-12);
    CHECK(u.answer == Answer::Yes);
    CHECK(u.min_abs > 0.0);
    CHECK(u.coefficients.size() == order.size());
    for (std::size_t n = 0; n < u.coefficients.size(); ++n) CHECK(std::abs(u.coefficients[n]) < std::ldexp(1.0, -int(n)));
}

TEST_CASE("comb fixed points live on the full comb", "[fixed][comb]") {
    CombSpec spec;
    spec.spine_right = Rule::geometric(1.0, 0.5);
    Tree comb = make_comb(spec);
    FixedPointCandidate c = comb_fixed_point(comb, 2, SpaceSpec::ell(1));
    CHECK(c.flow({2, 0, 0}) == 1.0);
    CHECK(c.flow({3, 2, 0}) == -1.0);
    CHECK(c.flow({1, 0, 0}) == 0.0);
    CHECK(std::isfinite(c.norm));
    ResidualReport r = is_backward_invariant(c.flow, vertex_ball(comb, {2, 0, 0}, 8, 4096).vertices, 0.0);
    CHECK(r.max_residual == 0.0);

    CombSpec half;
    half.half = true;
    CHECK_THROWS_AS(comb_fixed_point(make_comb(half), 1, SpaceSpec::ell(1)), std::invalid_argument);
}

TEST_CASE("half line witnesses fail hypercyclicity", "[mixing]") {
    MixingReport m = hypercyclicity_mixing_test(make_rooted_symmetric(Rule::constant(1), Rule::constant(1)), SpaceSpec::ell(2));
    CHECK(m.hypercyclic.no());
    REQUIRE_FALSE(m.witness.empty());
    for (double w : m.witness) CHECK(w == 1.0);
}

TEST_CASE("mixing without chaos on the powers-of-four tree", "[mixing]") {
    Tree t = make_rooted_symmetric(Rule::powers(4, 2, 1), Rule::constant(1));
    CHECK(hypercyclicity_mixing_test(t, SpaceSpec::ell(2)).mixing.yes());
    CHECK(classify_chaos(t, SpaceSpec::ell(2)).no());
}

TEST_CASE("Bergman generation sums follow the closed product", "[bergman]") {
    Tree line = make_rooted_symmetric(Rule::constant(1), Rule::constant(1));
    BergmanReport r3 = bergman_analysis(line, 3.0, line.base(), 50);
    CHECK(r3.in_l2);
    CHECK_FALSE(r3.discrepancy);
    // m = 0, q = 3: prod j/(j+2) = 2/((k+1)(k+2))
    for (int k = 1; k <= 50; ++k) CHECK(r3.generation_sums[std::size_t(k - 1)] == Approx(2.0 / ((k + 1.0) * (k + 2.0))));
    BergmanReport r2 = bergman_analysis(line, 2.0, line.base(), 50);
    CHECK_FALSE(r2.in_l2);
    CHECK(r2.discrepancy);
    CHECK(r2.membership == Status::CertifiedInfinite);
    CHECK(r2.max_relative_error < 1e-12);
}
