#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sources.hpp"

namespace treeshift {

class DocumentError : public std::runtime_error {
public:
    DocumentError(const std::string& where, const std::string& what)
        : std::runtime_error(where.empty() ? what : where + ": " + what) {}
};

struct TreeDocument {
    std::string kind;
    Tree tree;
    WeightRole role = WeightRole::Space;  // how the document gave its weights
    std::vector<std::string> warnings;
    std::string summary;
    std::optional<std::size_t> vertex_count;  // explicit vertices, when finite
};

namespace detail {

using json = nlohmann::json;

inline double read_scalar(const json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    if (!j.is_string()) throw DocumentError(where, "expected a decimal string");
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kInf;
    try {
        std::size_t used = 0;
        double x = std::stod(s, &used);
        if (used != s.size()) throw DocumentError(where, "malformed decimal '" + s + "'");
        return x;
    } catch (const std::logic_error&) {
        throw DocumentError(where, "malformed decimal '" + s + "'");
    }
}

inline Rule read_rule(const json& j, const std::string& where) {
    if (!j.is_string()) throw DocumentError(where, "expected a rule string");
    try {
        return Rule::parse(j.get<std::string>());
    } catch (const RuleError& e) {
        throw DocumentError(where, e.what());
    }
}

inline std::optional<Rule> read_optional_rule(const json& doc, const char* key) {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    return read_rule(doc[key], std::string("/") + key);
}

inline bool read_bool(const json& doc, const char* key, bool fallback) {
    if (!doc.contains(key)) return fallback;
    if (!doc[key].is_boolean()) throw DocumentError(std::string("/") + key, "expected a boolean");
    return doc[key].get<bool>();
}

inline std::int64_t read_id(const json& j, const std::string& where) {
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_string()) {
        if (auto v = parse_int(j.get<std::string>())) return *v;
    }
    throw DocumentError(where, "expected an integer vertex id");
}

struct FiniteParse {
    std::vector<FiniteEntry> entries;
    WeightRole role = WeightRole::Space;
};

inline FiniteParse read_vertices(const json& doc) {
    if (!doc.contains("vertices") || !doc["vertices"].is_array() || doc["vertices"].empty())
        throw DocumentError("/vertices", "expected a non-empty array");
    FiniteParse out;
    bool any_mu = false, any_lambda = false;
    for (std::size_t i = 0; i < doc["vertices"].size(); ++i) {
        const auto& v = doc["vertices"][i];
        std::string where = "/vertices/" + std::to_string(i);
        if (!v.is_object()) throw DocumentError(where, "expected an object");
        if (!v.contains("id")) throw DocumentError(where, "missing id");
        FiniteEntry e;
        e.id = read_id(v["id"], where + "/id");
        if (v.contains("parent") && !v["parent"].is_null()) e.parent = read_id(v["parent"], where + "/parent");
        if (v.contains("mu")) {
            any_mu = true;
            e.weight = read_scalar(v["mu"], where + "/mu");
        } else if (v.contains("lambda")) {
            any_lambda = true;
            e.weight = read_scalar(v["lambda"], where + "/lambda");
        } else {
            e.weight = 1.0;
        }
        out.entries.push_back(e);
    }
    if (any_mu && any_lambda) throw DocumentError("/vertices", "mix of mu and lambda weights");
    out.role = any_lambda ? WeightRole::Operator : WeightRole::Space;
    return out;
}

}  // namespace detail

inline TreeDocument parse_document(const nlohmann::json& doc) {
    using detail::json;
    if (!doc.is_object()) throw DocumentError("", "document must be an object");
    if (doc.contains("format_version")) {
        if (!doc["format_version"].is_number_integer() || doc["format_version"].get<int>() != 1)
            throw DocumentError("/format_version", "unsupported format version");
    }
    if (!doc.contains("kind") || !doc["kind"].is_string()) throw DocumentError("/kind", "missing kind");
    const std::string kind = doc["kind"].get<std::string>();

    try {
        if (kind == "finite") {
            auto fp = detail::read_vertices(doc);
            bool rooted = detail::read_bool(doc, "rooted", true);
            auto src = std::make_shared<FiniteSource>(std::move(fp.entries), fp.role, rooted);
            TreeDocument out{kind, Tree(src, src->root_weight()), fp.role, {}, src->description(), src->size()};
            if (!rooted) out.warnings.push_back("finite approximation of an unrooted tree: ancestors end at the top vertex");
            return out;
        }
        if (kind == "symmetric") {
            if (!doc.contains("gamma")) throw DocumentError("/gamma", "missing rule");
            if (!doc.contains("lambda")) throw DocumentError("/lambda", "missing rule");
            SymmetricSpec spec{detail::read_rule(doc["gamma"], "/gamma"), detail::read_rule(doc["lambda"], "/lambda"),
                               detail::read_bool(doc, "rooted", true), detail::read_optional_rule(doc, "gamma_left"),
                               detail::read_optional_rule(doc, "lambda_left")};
            bool free_left = detail::read_bool(doc, "free_left_end", false);
            if (!spec.rooted && free_left && !spec.gamma_left) spec.gamma_left = Rule::constant(1.0);
            if (!spec.rooted && spec.free_left_end() != free_left)
                throw DocumentError("/free_left_end", "flag contradicts the left children rule");
            if (spec.rooted && free_left) throw DocumentError("/free_left_end", "a rooted tree has no left end");
            auto src = std::make_shared<SymmetricSource>(spec);
            // validate the children counts on the stationary prefix
            auto sg = spec.gamma.value_stationary_from();
            for (std::int64_t n = 0; n <= (sg ? *sg : 64); ++n) src->gamma(n);
            return {kind, Tree(src), WeightRole::Operator, {}, src->description(), std::nullopt};
        }
        if (kind == "hybrid") {
            auto fp = detail::read_vertices(doc);
            auto prefix = std::make_shared<FiniteSource>(std::move(fp.entries), fp.role, true);
            std::vector<Attachment> att;
            if (doc.contains("attach")) {
                if (!doc["attach"].is_array()) throw DocumentError("/attach", "expected an array");
                for (std::size_t i = 0; i < doc["attach"].size(); ++i) {
                    const auto& a = doc["attach"][i];
                    std::string where = "/attach/" + std::to_string(i);
                    if (!a.contains("at") || !a.contains("gamma") || !a.contains("lambda"))
                        throw DocumentError(where, "attachment needs at, gamma and lambda");
                    att.push_back({detail::read_id(a["at"], where + "/at"), detail::read_rule(a["gamma"], where + "/gamma"),
                                   detail::read_rule(a["lambda"], where + "/lambda")});
                }
            }
            auto src = std::make_shared<HybridSource>(prefix, std::move(att));
            TreeDocument out{kind, Tree(src, src->root_weight()), fp.role, {}, src->description(), std::nullopt};
            for (auto leaf : src->bare_leaves())
                out.warnings.push_back("Unknown-prone: leaf " + std::to_string(leaf) + " has no declared tail");
            return out;
        }
        if (kind == "comb") {
            CombSpec spec;
            spec.half = detail::read_bool(doc, "half", false);
            if (auto r = detail::read_optional_rule(doc, "spine")) spec.spine_right = *r;
            if (auto r = detail::read_optional_rule(doc, "spine_left")) spec.spine_left = *r;
            if (auto r = detail::read_optional_rule(doc, "tooth")) spec.tooth = *r;
            if (spec.spine_right.has_zero_value() || spec.spine_left.has_zero_value() || spec.tooth.has_zero_value())
                throw DocumentError("", "comb weights must be nonzero");
            auto tree = make_comb(spec);
            return {kind, tree, WeightRole::Space, {}, tree.source().description(), std::nullopt};
        }
        if (kind == "star") {
            double root = doc.contains("root_mu") ? detail::read_scalar(doc["root_mu"], "/root_mu") : 1.0;
            if (!doc.contains("arms") || !doc["arms"].is_array()) throw DocumentError("/arms", "expected an array");
            std::vector<Arm> arms;
            for (std::size_t i = 0; i < doc["arms"].size(); ++i) {
                const auto& a = doc["arms"][i];
                std::string where = "/arms/" + std::to_string(i);
                Arm arm;
                if (a.contains("count")) arm.count = detail::read_scalar(a["count"], where + "/count");
                if (a.contains("scale")) arm.scale = detail::read_rule(a["scale"], where + "/scale");
                if (a.contains("weights")) arm.weights = detail::read_rule(a["weights"], where + "/weights");
                if (a.contains("length")) arm.length = detail::read_scalar(a["length"], where + "/length");
                if (!(arm.count >= 1.0) || (!std::isinf(arm.count) && arm.count != std::floor(arm.count)))
                    throw DocumentError(where + "/count", "expected a positive integer or inf");
                if (!(arm.length >= 1.0)) throw DocumentError(where + "/length", "expected a positive length");
                arms.push_back(std::move(arm));
            }
            auto tree = make_star(root, std::move(arms));
            return {kind, tree, WeightRole::Space, {}, tree.source().description(), std::nullopt};
        }
    } catch (const TreeError& e) {
        throw DocumentError("", e.what());
    }
    throw DocumentError("/kind", "unknown kind '" + kind + "'");
}

inline TreeDocument load_document(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DocumentError(path, "cannot open file");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw DocumentError(path + " at byte " + std::to_string(e.byte), "malformed JSON");
    }
    return parse_document(doc);
}

}  // namespace treeshift
