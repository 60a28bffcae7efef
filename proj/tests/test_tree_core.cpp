#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include <treeshift/bound.hpp>
#include <treeshift/document.hpp>
#include <treeshift/tree_ops.hpp>

using namespace treeshift;
using Catch::Approx;

namespace {

TreeDocument doc(const char* text) { return parse_document(nlohmann::json::parse(text)); }

std::string doc_error(const char* text) {
    try {
        doc(text);
    } catch (const DocumentError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("rules evaluate their declared sequences", "[rule]") {
    CHECK(Rule::parse("constant 2").at(7) == 2.0);
    CHECK(Rule::parse("geometric 1 0.5").at(3) == 0.125);
    Rule t = Rule::parse("table [1, 2] then constant 3");
    CHECK(t.at(0) == 1.0);
    CHECK(t.at(1) == 2.0);
    CHECK(t.at(5) == 3.0);
    Rule pw = Rule::parse("powers 4 2 1");
    CHECK(pw.at(4) == 2.0);
    CHECK(pw.at(16) == 2.0);
    CHECK(pw.at(5) == 1.0);
    CHECK_THROWS_AS(Rule::parse("constant"), RuleError);
    CHECK_THROWS_AS(Rule::parse("spiral 1 2"), RuleError);
}

TEST_CASE("exponent conjugates", "[numeric]") {
    CHECK(Exponent(2).conjugate() == 2.0);
    CHECK(Exponent(1.5).conjugate() == Approx(3.0));
    CHECK(std::isinf(Exponent(1).conjugate()));
    CHECK(Exponent::infinity().conjugate() == 1.0);
    CHECK_THROWS_AS(Exponent(0.5), std::invalid_argument);
}

TEST_CASE("budget validation rejects nonsense limits", "[budget]") {
    Budget b;
    b.depth = 0;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
    b = Budget{};
    b.tol = 0.0;
    CHECK_THROWS_AS(b.validate(), std::invalid_argument);
    CHECK_NOTHROW(Budget{}.validate());
}

TEST_CASE("rooted binary tree structure and weights", "[tree]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(2));
    REQUIRE(t.rooted());
    Vertex root = *t.root();
    CHECK(t.children(root).size() == 2);
    CHECK(t.name(root) == "0:0");
    auto gm = generations(t, root, 0, 5);
    CHECK(gm.complete);
    for (std::int64_t n = 0; n <= 5; ++n) CHECK(gm.generations[n].vertices.size() == std::size_t(1) << n);
    Vertex leaf = gm.generations[5].vertices.back();
    CHECK(t.level(leaf) == 5);
    CHECK(t.mu(leaf) == Approx(std::ldexp(1.0, -5)));
    CHECK(t.path_weight(root, leaf) == Approx(32.0));
    CHECK(t.is_descendant(leaf, root));
    CHECK_FALSE(t.is_descendant(root, leaf));
    auto parsed = t.source().parse_vertex(t.name(leaf));
    REQUIRE(parsed);
    CHECK(*parsed == leaf);
}

TEST_CASE("generations of an unrooted tree reach through ancestors", "[tree]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    REQUIRE_FALSE(t.rooted());
    auto gm = generations(t, t.base(), -2, 1, 2);
    CHECK(gm.generations[-2].vertices.size() == 1);
    CHECK(gm.generations[-1].vertices.size() == 2);
    CHECK(gm.generations[0].vertices.size() == 4);
    CHECK(gm.generations[1].vertices.size() == 8);
    CHECK_FALSE(gm.complete);
}

TEST_CASE("vertex balls are undirected and capped", "[tree]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    auto ball = vertex_ball(t, t.base(), 1);
    CHECK(ball.vertices.size() == 4);  // base, parent, two children
    auto capped = vertex_ball(t, t.base(), 6, 10);
    CHECK(capped.vertices.size() == 10);
    CHECK(capped.truncated);
}

TEST_CASE("descendant and power subtrees", "[tree]") {
    Tree t = make_rooted_symmetric(Rule::constant(2), Rule::constant(1));
    Vertex child = t.children(*t.root()).front();
    Tree sub = descendants_subtree(t, child);
    CHECK(sub.rooted());
    CHECK(*sub.root() == child);
    CHECK(sub.children(child).size() == 2);
    CHECK_FALSE(sub.contains(*t.root()));

    Tree pw = power_subtree(t, *t.root(), 2);
    CHECK(pw.children(*t.root()).size() == 4);
    for (const auto& g : pw.children(*t.root())) CHECK(t.level(g) == 2);
}

TEST_CASE("derived tree of the unrooted binary tree", "[tree]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::constant(1));
    const Vertex v0 = t.base();
    auto [minus, lambda_minus] = derived_minus_tree(t, v0, 1);
    REQUIRE(minus.rooted());
    CHECK(*minus.root() == v0);
    auto kids = minus.children(v0);
    REQUIRE(kids.size() == 2);  // parent of v0 and the sibling of v0
    Vertex up = *t.parent(v0);
    CHECK(std::count(kids.begin(), kids.end(), up) == 1);
    CHECK_FALSE(minus.contains(t.children(v0).front()));
    for (const auto& k : kids) {
        CHECK(minus.mu(k) == Approx(t.mu(k)));
        CHECK(lambda_minus.at(k) == Approx(t.mu(v0) / t.mu(k)));
    }
}

TEST_CASE("conjugate weight matches the literal path formula", "[tree]") {
    Tree t = make_unrooted_symmetric(Rule::constant(2), Rule::table({0.5, 3.0}, Rule::constant(1.5)));
    const Vertex v0 = t.base();
    WeightMap mu = conjugate_weight(t, v0, 2.0);
    for (const auto& v : vertex_ball(t, v0, 4, 200).vertices)
        CHECK(mu.at(v) == Approx(conjugate_weight_literal(t, v0, 2.0, v)).epsilon(1e-12));
    CHECK(mu.at(v0) == 2.0);
}

TEST_CASE("finite documents keep ids and weights", "[document]") {
    auto d = doc(R"({"kind": "finite", "vertices": [
        {"id": 0, "mu": "1"}, {"id": 7, "parent": 0, "mu": "0.5"}, {"id": 3, "parent": 7, "mu": "0.25"}]})");
    CHECK(d.role == WeightRole::Space);
    REQUIRE(d.vertex_count);
    CHECK(*d.vertex_count == 3);
    Vertex v3 = *d.tree.source().parse_vertex("3");
    CHECK(d.tree.mu(v3) == 0.25);
    CHECK(d.tree.level(v3) == 2);
    CHECK(d.tree.lambda(v3) == 2.0);

    auto ops = doc(R"({"kind": "finite", "vertices": [{"id": 0}, {"id": 1, "parent": 0, "lambda": "4"}]})");
    CHECK(ops.role == WeightRole::Operator);
    CHECK(ops.tree.mu(*ops.tree.source().parse_vertex("1")) == 0.25);
}

TEST_CASE("malformed documents are rejected with a location", "[document]") {
    CHECK_THAT(doc_error(R"({"kind": "finite", "vertices": [{"id": 0, "parent": 1}, {"id": 1, "parent": 0}]})"),
               Catch::Matchers::ContainsSubstring("cycle"));
    CHECK_THAT(doc_error(R"({"kind": "finite", "vertices": [{"id": 0}, {"id": 0, "parent": 0}]})"),
               Catch::Matchers::ContainsSubstring("duplicate"));
    CHECK_THAT(doc_error(R"({"kind": "finite", "vertices": [{"id": 0}, {"id": 1, "parent": 5}]})"),
               Catch::Matchers::ContainsSubstring("dangling"));
    CHECK_THAT(doc_error(R"({"kind": "finite", "vertices": [{"id": 0, "mu": "1"}, {"id": 1, "parent": 0, "lambda": "2"}]})"),
               Catch::Matchers::ContainsSubstring("mix"));
    CHECK_THAT(doc_error(R"({"kind": "finite", "vertices": [{"id": 0, "mu": "1x"}]})"),
               Catch::Matchers::ContainsSubstring("/vertices/0/mu"));
    CHECK_THAT(doc_error(R"({"kind": "symmetric", "lambda": "constant 1"})"), Catch::Matchers::ContainsSubstring("/gamma"));
    CHECK_THAT(doc_error(R"({"kind": "symmetric", "gamma": "constant 2", "lambda": "wobble"})"),
               Catch::Matchers::ContainsSubstring("/lambda"));
    CHECK_THAT(doc_error(R"({"kind": "symmetric", "gamma": "constant 2.5", "lambda": "constant 1"})"),
               Catch::Matchers::ContainsSubstring("integer"));
    CHECK_THAT(doc_error(R"({"kind": "symmetric", "gamma": "constant 2", "lambda": "constant 1", "rooted": false,
                             "gamma_left": "constant 2", "free_left_end": true})"),
               Catch::Matchers::ContainsSubstring("free_left_end"));
    CHECK_THAT(doc_error(R"({"kind": "comb", "tooth": "constant 0"})"), Catch::Matchers::ContainsSubstring("nonzero"));
    CHECK_THAT(doc_error(R"({"kind": "lattice"})"), Catch::Matchers::ContainsSubstring("unknown kind"));
    CHECK_THAT(doc_error(R"({"kind": "finite", "format_version": 2, "vertices": [{"id": 0}]})"),
               Catch::Matchers::ContainsSubstring("format"));
    CHECK_THROWS_AS(load_document("/nonexistent/tree.json"), DocumentError);
}

TEST_CASE("hybrid documents warn about leaves without a declared tail", "[document]") {
    auto d = doc(R"({"kind": "hybrid", "vertices": [{"id": 0}, {"id": 1, "parent": 0}, {"id": 2, "parent": 0}],
                    "attach": [{"at": 1, "gamma": "constant 2", "lambda": "constant 1"}]})");
    REQUIRE(d.warnings.size() == 1);
    CHECK_THAT(d.warnings[0], Catch::Matchers::ContainsSubstring("leaf 2"));
    Vertex one = *d.tree.source().parse_vertex("1");
    CHECK(d.tree.children(one).size() == 2);
    CHECK(d.tree.is_leaf(*d.tree.source().parse_vertex("2")));
}

TEST_CASE("comb documents follow the product weight", "[document]") {
    auto d = doc(R"({"kind": "comb", "spine": "geometric 1 0.5", "tooth": "geometric 1 0.25"})");
    Tree t = d.tree;
    CHECK_FALSE(t.rooted());
    Vertex v = *t.source().parse_vertex("(3,2)");
    CHECK(t.mu(v) == Approx(0.125 * 0.0625));
    auto half = doc(R"({"kind": "comb", "half": true})");
    CHECK(half.tree.rooted());
}

TEST_CASE("operator weight view is undefined at the root", "[tree]") {
    Tree t = make_rooted_symmetric(Rule::constant(1), Rule::constant(3));
    WeightMap lam(t, WeightRole::Operator);
    CHECK_THROWS_AS(lam.at(*t.root()), std::invalid_argument);
    CHECK(lam.at(t.children(*t.root()).front()) == Approx(3.0));
}
