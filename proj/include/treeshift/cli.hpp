#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "document.hpp"
#include "report.hpp"

namespace treeshift::cli {

using report::json;
using report::num;

struct Options {
    std::string command;
    std::string file;
    std::string p = "2";
    std::string q = "2";
    std::string space = "lp";
    bool operator_weight = false;
    bool space_weight = false;
    std::string vertex;
    int steps = 5;
    std::string init;
    int depth_budget = 24;
    double tol = 1e-9;
    std::int64_t vertex_budget = 1'000'000;
    int nmax = 16;
    int threads = 1;
    int table_depth = 4;
};

struct Outcome {
    int exit_code = 0;
    json report;
    std::string text;
};

class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline Budget make_budget(const Options& o) {
    Budget b;
    b.depth = o.depth_budget;
    b.tol = o.tol;
    b.vertices = o.vertex_budget;
    b.max_period = o.nmax;
    b.threads = o.threads;
    try {
        b.validate();
    } catch (const std::invalid_argument& e) {
        throw BudgetError(e.what());
    }
    return b;
}

inline double parse_number(const std::string& s, const std::string& what) {
    if (s == "inf" || s == "infinity") return kInf;
    try {
        std::size_t used = 0;
        double x = std::stod(s, &used);
        if (used != s.size()) throw InputError("malformed " + what + " '" + s + "'");
        return x;
    } catch (const std::logic_error&) {
        throw InputError("malformed " + what + " '" + s + "'");
    }
}

inline Exponent parse_exponent(const std::string& s, const std::string& what) {
    double x = parse_number(s, what);
    if (!(x >= 1.0)) throw InputError(what + " must be >= 1");
    return Exponent(x);
}

inline Vertex parse_vertex(const Tree& t, const std::string& s) {
    if (s.empty()) return t.base();
    auto v = t.source().parse_vertex(s);
    if (!v) throw InputError("unknown vertex '" + s + "'");
    return *v;
}

inline SpaceSpec parse_space(const Options& o) {
    if (o.space == "c0") return SpaceSpec::c0();
    if (o.space != "lp") throw InputError("--space must be lp or c0");
    double p = parse_exponent(o.p, "--p").value();
    if (std::isinf(p)) throw InputError("l^p needs a finite p; use --space c0");
    return SpaceSpec::ell(p);
}

inline void check_role(const Options& o, const TreeDocument& doc) {
    if (o.operator_weight && o.space_weight) throw InputError("--operator-weight and --space-weight are exclusive");
    if (o.operator_weight && doc.role != WeightRole::Operator)
        throw InputError("--operator-weight given but the document declares space weights mu");
    if (o.space_weight && doc.role != WeightRole::Space)
        throw InputError("--space-weight given but the document declares operator weights lambda");
}

inline ShiftForm form_for(const TreeDocument& doc) {
    return doc.role == WeightRole::Operator ? ShiftForm::Weighted : ShiftForm::Unweighted;
}

// Vertices of generations 0..depth below v (and up to `depth` ancestors of v).
inline std::vector<Vertex> table_vertices(const Tree& t, const Vertex& v, int depth, bool ancestors) {
    auto gm = generations(t, v, ancestors ? -depth : 0, depth, depth, 64);
    std::vector<Vertex> out;
    for (auto& [g, gen] : gm.generations)
        for (std::size_t i = 0; i < gen.vertices.size() && i < 16; ++i) out.push_back(gen.vertices[i]);
    return out;
}

inline json cmd_validate(const TreeDocument& doc) {
    const Tree& t = doc.tree;
    json gens = json::array();
    auto gm = generations(t, t.base(), 0, 3, 0, 1024);
    for (auto& [g, gen] : gm.generations)
        gens.push_back({{"generation", g}, {"listed", gen.vertices.size()}, {"truncated", gen.truncated}});
    json r = {{"kind", doc.kind},
              {"summary", doc.summary},
              {"rooted", t.rooted()},
              {"base", t.name(t.base())},
              {"weights", doc.role == WeightRole::Operator ? "lambda" : "mu"},
              {"warnings", doc.warnings},
              {"generations", gens}};
    if (doc.vertex_count) {
        r["vertices"] = *doc.vertex_count;
        r["edges"] = *doc.vertex_count - 1;
    }
    if (auto* s = t.source().symmetric_spec()) {
        r["gamma"] = s->gamma.to_string();
        r["lambda"] = s->lambda.to_string();
    }
    return r;
}

inline json cmd_constants(const TreeDocument& doc, const Options& o, const Budget& b) {
    const Tree& t = doc.tree;
    Exponent p = parse_exponent(o.p, "--p");
    Vertex v = parse_vertex(t, o.vertex);
    ResistanceEngine eng(t, p, b);
    return {{"vertex", t.name(v)},
            {"p", num(p.value())},
            {"p_dual", num(p.conjugate())},
            {"continued_fraction", report::to_json(eng.continued_fraction(v))},
            {"resistance", report::to_json(eng.resistance(v))}};
}

inline json cmd_classify(const TreeDocument& doc, const Options& o, const Budget& b) {
    const Tree& t = doc.tree;
    SpaceSpec space = parse_space(o);
    OperatorCheck op = operator_defined_check(t, space, b);
    Verdict chaos = classify_chaos(t, space, b);
    MixingReport mix = hypercyclicity_mixing_test(t, space, b, chaos);
    json r = {{"space", space.name()},
              {"operator_defined", report::to_json(op.defined)},
              {"operator_bounded", report::to_json(op.bounded)},
              {"chaotic", report::to_json(chaos)},
              {"hypercyclic", report::to_json(mix.hypercyclic)},
              {"mixing", report::to_json(mix.mixing)}};
    if (auto* s = t.source().symmetric_spec()) {
        auto gs = s->gamma.value_stationary_from(), ls = s->lambda.value_stationary_from();
        bool plain = gs && ls && *gs == 0 && *ls == 0 && !s->gamma_left && !s->lambda_left;
        if (plain) {
            double n = s->gamma.at(0);
            if (n == std::floor(n) && n >= 1.0 && n <= 1e9) {
                Verdict rv = rolewicz_classify({int(n), s->rooted}, s->lambda.at(0), space);
                r["rolewicz"] = report::to_json(rv);
            }
        }
    }
    return r;
}

inline json cmd_flow(const TreeDocument& doc, const Options& o, const Budget& b) {
    const Tree& t = doc.tree;
    Exponent p = parse_exponent(o.p, "--p");
    Vertex v = parse_vertex(t, o.vertex);
    json r = {{"vertex", t.name(v)}, {"p", num(p.value())}};
    if (t.rooted() && !t.parent(v)) {
        MinimalFlow m = minimal_unit_flow(t, v, p, b);
        r["construction"] = "rooted minimal unit flow";
        r["available"] = m.available;
        r["norm"] = report::to_json(m.norm);
        r["off_root"] = report::to_json(m.off_root);
        if (!m.note.empty()) r["note"] = m.note;
        if (m.available) {
            r["values"] = report::flow_table(m.flow, table_vertices(t, v, o.table_depth, false));
            r["residual"] = report::to_json(t, is_backward_invariant(m.flow, std::min(o.table_depth, 6), b.tol));
        }
        return r;
    }
    UnrootedFlow u = unrooted_unit_flow(t, v, p, b, 1);
    r["construction"] = "signed unit flow through the basepoint";
    r["available"] = u.plus.available && u.minus.available;
    r["plus_norm"] = report::to_json(u.plus.norm);
    r["minus_norm"] = report::to_json(u.minus.norm);
    r["energy"] = report::to_json(u.energy);
    r["spine_limit"] = num(u.spine_limit);
    r["spine_limit_status"] = to_string(u.spine_limit_status);
    if (!u.note.empty()) r["note"] = u.note;
    if (r["available"].get<bool>()) {
        auto vs = table_vertices(t, v, o.table_depth, true);
        r["values"] = report::flow_table(u.flow, vs);
        r["residual"] = report::to_json(t, is_backward_invariant(u.flow, vs, b.tol, ShiftForm::Unweighted));
    }
    return r;
}

inline json cmd_capacity(const TreeDocument& doc, const Options& o, const Budget& b) {
    const Tree& t = doc.tree;
    double q = parse_number(o.q, "--q");
    if (!(q > 1.0 && q < kInf)) throw InputError("--q must lie in (1, inf)");
    CapacityReport c = (t.rooted() && o.vertex.empty()) ? boundary_capacity(t, q, b)
                                                        : capacity_with_basepoint(t, parse_vertex(t, o.vertex), q, b);
    json r = report::to_json(c, t);
    if (c.equilibrium)
        r["equilibrium"] = report::flow_table(*c.equilibrium, table_vertices(t, c.basepoint, std::min(o.table_depth, 3),
                                                                            !(t.rooted() && !t.parent(c.basepoint))));
    return r;
}

inline Sparse parse_init(const Tree& t, const std::string& init) {
    Sparse f;
    std::stringstream ss(init);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.empty()) continue;
        auto eq = item.rfind('=');
        if (eq == std::string::npos) throw InputError("--init entries look like vertex=value");
        Vertex v = parse_vertex(t, item.substr(0, eq));
        f[v] += parse_number(item.substr(eq + 1), "--init value");
    }
    if (f.empty()) throw InputError("--init is empty");
    return f;
}

inline json cmd_orbit(const TreeDocument& doc, const Options& o, const Budget& b) {
    const Tree& t = doc.tree;
    if (o.steps < 0) throw InputError("--steps must be nonnegative");
    Sparse f = parse_init(t, o.init);
    ShiftForm form = form_for(doc);
    json steps = json::array();
    for (int n = 0; n <= o.steps; ++n) {
        json entries = json::array();
        for (const auto& [v, x] : f)
            if (x != 0.0) entries.push_back({{"vertex", t.name(v)}, {"value", num(x)}});
        steps.push_back({{"step", n}, {"support", entries}});
        if (n < o.steps) f = apply_shift(t, form, f, 1, b);
    }
    return {{"shift", to_string(form)}, {"steps", steps}};
}

inline Outcome run(const Options& o, const std::vector<std::string>& argv) {
    Outcome out;
    std::string content;
    {
        std::ifstream in(o.file, std::ios::binary);
        if (!in) {
            out.exit_code = 1;
            out.text = "error: " + o.file + ": cannot open file\n";
            return out;
        }
        std::stringstream ss;
        ss << in.rdbuf();
        content = ss.str();
    }
    std::uint64_t h = report::fnv1a(content);
    std::string args;
    for (const auto& a : argv) args += a + '\0';
    h = report::fnv1a(args, h);
    json rep = {{"command", o.command}, {"arguments", argv}, {"inputs_digest", "fnv1a64:" + report::hex64(h)}};
    try {
        Budget b = make_budget(o);
        rep["budget"] = report::to_json(b);
        nlohmann::json doc_json;
        try {
            doc_json = nlohmann::json::parse(content);
        } catch (const nlohmann::json::parse_error& e) {
            throw DocumentError(o.file + " at byte " + std::to_string(e.byte), "malformed JSON");
        }
        TreeDocument doc = parse_document(doc_json);
        check_role(o, doc);
        json res;
        if (o.command == "validate") res = cmd_validate(doc);
        else if (o.command == "constants") res = cmd_constants(doc, o, b);
        else if (o.command == "classify") res = cmd_classify(doc, o, b);
        else if (o.command == "flow") res = cmd_flow(doc, o, b);
        else if (o.command == "capacity") res = cmd_capacity(doc, o, b);
        else if (o.command == "orbit") res = cmd_orbit(doc, o, b);
        else throw InputError("unknown command " + o.command);
        rep["results"] = res;
        if (!doc.warnings.empty()) rep["warnings"] = doc.warnings;
    } catch (const BudgetError& e) {
        out.exit_code = 2;
        out.text = std::string("error: budget: ") + e.what() + "\n";
        return out;
    } catch (const BudgetExceeded& e) {
        out.exit_code = 2;
        out.text = std::string("error: budget exhausted: ") + e.what() + "\n";
        return out;
    } catch (const ShiftError& e) {
        out.exit_code = 1;
        out.text = std::string("error: ") + e.what() + "\n";
        return out;
    } catch (const DocumentError& e) {
        out.exit_code = 1;
        out.text = std::string("error: ") + e.what() + "\n";
        return out;
    } catch (const InputError& e) {
        out.exit_code = 1;
        out.text = std::string("error: ") + e.what() + "\n";
        return out;
    } catch (const std::invalid_argument& e) {
        out.exit_code = 1;
        out.text = std::string("error: ") + e.what() + "\n";
        return out;
    }
    out.report = rep;
    report::render(rep, out.text);
    return out;
}

}  // namespace treeshift::cli
