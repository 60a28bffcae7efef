#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "growth.hpp"
#include "numeric.hpp"

namespace treeshift {

class RuleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Result of summing |rule(n)|^e over n >= start.
struct SeriesValue {
    double value = 0.0;
    bool finite = true;
};

// A sequence indexed by n >= 0, as declared in tree documents.
//   constant c             c
//   geometric a r          a * r^n
//   polynomial c k         c * (n+1)^k
//   table [x0, ...] then R x_n for n < size, else R(n)
//   powers m on off        on at n = m^j (j >= 1), off elsewhere
class Rule {
public:
    struct Constant { double c; };
    struct Geometric { double a, r; };
    struct Polynomial { double c, k; };
    struct Table { std::vector<double> head; std::shared_ptr<const Rule> tail; };
    struct Powers { std::int64_t base; double on, off; };

    static Rule constant(double c) { return Rule(Constant{c}); }
    static Rule geometric(double a, double r) { return Rule(Geometric{a, r}); }
    static Rule polynomial(double c, double k) { return Rule(Polynomial{c, k}); }
    static Rule table(std::vector<double> head, Rule tail) {
        return Rule(Table{std::move(head), std::make_shared<const Rule>(std::move(tail))});
    }
    static Rule powers(std::int64_t base, double on, double off) { return Rule(Powers{base, on, off}); }

    static Rule parse(std::string_view text);

    double at(std::int64_t n) const {
        return std::visit(
            [n](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return k.c;
                else if constexpr (std::is_same_v<K, Geometric>) return k.a * std::pow(k.r, double(n));
                else if constexpr (std::is_same_v<K, Polynomial>) return k.c * std::pow(double(n + 1), k.k);
                else if constexpr (std::is_same_v<K, Table>)
                    return n < std::int64_t(k.head.size()) ? k.head[std::size_t(n)] : k.tail->at(n);
                else return is_power(k.base, n) ? k.on : k.off;
            },
            kind_);
    }

    double log_abs_at(std::int64_t n) const {
        if (auto* g = std::get_if<Geometric>(&kind_))
            return std::log(std::abs(g->a)) + double(n) * std::log(std::abs(g->r));
        if (auto* p = std::get_if<Polynomial>(&kind_))
            return std::log(std::abs(p->c)) + p->k * std::log(double(n + 1));
        if (auto* t = std::get_if<Table>(&kind_); t && n >= std::int64_t(t->head.size()))
            return t->tail->log_abs_at(n);
        return safe_log_abs(at(n));
    }

    // Smallest s with rule(n) constant for n >= s.
    std::optional<std::int64_t> value_stationary_from() const {
        return std::visit(
            [](const auto& k) -> std::optional<std::int64_t> {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return 0;
                else if constexpr (std::is_same_v<K, Geometric>)
                    return k.r == 1.0 ? std::optional<std::int64_t>(0) : std::nullopt;
                else if constexpr (std::is_same_v<K, Polynomial>)
                    return k.k == 0.0 ? std::optional<std::int64_t>(0) : std::nullopt;
                else if constexpr (std::is_same_v<K, Table>) {
                    auto s = k.tail->value_stationary_from();
                    if (!s) return std::nullopt;
                    return std::max<std::int64_t>(*s, std::int64_t(k.head.size()));
                } else return k.on == k.off ? std::optional<std::int64_t>(0) : std::nullopt;
            },
            kind_);
    }

    // Smallest s with rule(n+1)/rule(n) constant for n >= s.
    std::optional<std::int64_t> ratio_stationary_from() const {
        if (std::holds_alternative<Geometric>(kind_)) return 0;
        if (auto* t = std::get_if<Table>(&kind_)) {
            auto s = t->tail->ratio_stationary_from();
            if (!s) return std::nullopt;
            return std::max<std::int64_t>(*s, std::int64_t(t->head.size()));
        }
        return value_stationary_from();
    }

    // If rule(n) = a * r^n for all n >= start, returns {a, r}.
    std::optional<std::pair<double, double>> geometric_from(std::int64_t start) const {
        if (auto* c = std::get_if<Constant>(&kind_)) return std::pair{c->c, 1.0};
        if (auto* g = std::get_if<Geometric>(&kind_)) return std::pair{g->a, g->r};
        if (auto* t = std::get_if<Table>(&kind_); t && start >= std::int64_t(t->head.size()))
            return t->tail->geometric_from(start);
        if (auto s = value_stationary_from(); s && start >= *s) return std::pair{at(start), 1.0};
        return std::nullopt;
    }

    // Asymptotics of L(n) = sum_{k<n} log|rule(k)|.
    Growth log_sum_growth() const {
        return std::visit(
            [](const auto& k) -> Growth {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return {0, 0, std::log(std::abs(k.c)), 0};
                else if constexpr (std::is_same_v<K, Geometric>) {
                    double lr = std::log(std::abs(k.r));
                    return {lr / 2.0, 0, std::log(std::abs(k.a)) - lr / 2.0, 0};
                } else if constexpr (std::is_same_v<K, Polynomial>)
                    return {0, k.k, std::log(std::abs(k.c)) - k.k, k.k / 2.0};
                else if constexpr (std::is_same_v<K, Table>) return k.tail->log_sum_growth();
                else {
                    double off = std::log(std::abs(k.off));
                    return {0, 0, off, (std::log(std::abs(k.on)) - off) / std::log(double(k.base))};
                }
            },
            kind_);
    }

    // Asymptotics of log|rule(n)| itself.
    Growth log_term_growth() const {
        return std::visit(
            [](const auto& k) -> Growth {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Geometric>) return {0, 0, std::log(std::abs(k.r)), 0};
                else if constexpr (std::is_same_v<K, Polynomial>) return {0, 0, 0, k.k};
                else if constexpr (std::is_same_v<K, Table>) return k.tail->log_term_growth();
                else return {};
            },
            kind_);
    }

    // inf_{n >= start} |rule(n)|
    double abs_infimum_from(std::int64_t start) const {
        return std::visit(
            [start](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return std::abs(k.c);
                else if constexpr (std::is_same_v<K, Geometric>) {
                    double r = std::abs(k.r);
                    return r < 1.0 ? 0.0 : std::abs(k.a) * std::pow(r, double(start));
                } else if constexpr (std::is_same_v<K, Polynomial>)
                    return k.k < 0.0 ? 0.0 : std::abs(k.c) * std::pow(double(start + 1), k.k);
                else if constexpr (std::is_same_v<K, Table>) {
                    double best = kInf;
                    for (std::int64_t n = start; n < std::int64_t(k.head.size()); ++n)
                        best = std::min(best, std::abs(k.head[std::size_t(n)]));
                    return std::min(best, k.tail->abs_infimum_from(std::max<std::int64_t>(start, k.head.size())));
                } else return std::min(std::abs(k.on), std::abs(k.off));
            },
            kind_);
    }

    // sup_{n >= start} |rule(n)|
    double abs_supremum_from(std::int64_t start) const {
        return std::visit(
            [start](const auto& k) -> double {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return std::abs(k.c);
                else if constexpr (std::is_same_v<K, Geometric>) {
                    double r = std::abs(k.r);
                    return r > 1.0 ? kInf : std::abs(k.a) * std::pow(r, double(start));
                } else if constexpr (std::is_same_v<K, Polynomial>)
                    return k.k > 0.0 ? kInf : std::abs(k.c) * std::pow(double(start + 1), k.k);
                else if constexpr (std::is_same_v<K, Table>) {
                    double best = 0.0;
                    for (std::int64_t n = start; n < std::int64_t(k.head.size()); ++n)
                        best = std::max(best, std::abs(k.head[std::size_t(n)]));
                    return std::max(best, k.tail->abs_supremum_from(std::max<std::int64_t>(start, k.head.size())));
                } else return std::max(std::abs(k.on), std::abs(k.off));
            },
            kind_);
    }

    // sum_{n >= start} |rule(n)|^e
    SeriesValue abs_power_series(double e, std::int64_t start = 0) const {
        return std::visit(
            [e, start](const auto& k) -> SeriesValue {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return {kInf, false};
                else if constexpr (std::is_same_v<K, Geometric>) {
                    double theta = std::pow(std::abs(k.r), e);
                    if (!(theta < 1.0)) return {kInf, false};
                    return {std::pow(std::abs(k.a), e) * std::pow(theta, double(start)) / (1.0 - theta), true};
                } else if constexpr (std::is_same_v<K, Polynomial>) {
                    double s = k.k * e;
                    if (!(s < -1.0)) return {kInf, false};
                    return {std::pow(std::abs(k.c), e) * zeta_tail(s, double(start + 1)), true};
                } else if constexpr (std::is_same_v<K, Table>) {
                    double head = 0.0;
                    for (std::int64_t n = start; n < std::int64_t(k.head.size()); ++n)
                        head += std::pow(std::abs(k.head[std::size_t(n)]), e);
                    auto tail = k.tail->abs_power_series(e, std::max<std::int64_t>(start, k.head.size()));
                    return {head + tail.value, tail.finite};
                } else return {kInf, false};
            },
            kind_);
    }

    std::string to_string() const {
        return std::visit(
            [](const auto& k) -> std::string {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return "constant " + format_double(k.c);
                else if constexpr (std::is_same_v<K, Geometric>)
                    return "geometric " + format_double(k.a) + " " + format_double(k.r);
                else if constexpr (std::is_same_v<K, Polynomial>)
                    return "polynomial " + format_double(k.c) + " " + format_double(k.k);
                else if constexpr (std::is_same_v<K, Table>) {
                    std::string s = "table [";
                    for (std::size_t i = 0; i < k.head.size(); ++i)
                        s += (i ? ", " : "") + format_double(k.head[i]);
                    return s + "] then " + k.tail->to_string();
                } else
                    return "powers " + std::to_string(k.base) + " " + format_double(k.on) + " " +
                           format_double(k.off);
            },
            kind_);
    }

    bool has_zero_value() const {
        return std::visit(
            [](const auto& k) -> bool {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Constant>) return k.c == 0.0;
                else if constexpr (std::is_same_v<K, Geometric>) return k.a == 0.0 || k.r == 0.0;
                else if constexpr (std::is_same_v<K, Polynomial>) return k.c == 0.0;
                else if constexpr (std::is_same_v<K, Table>)
                    return std::find(k.head.begin(), k.head.end(), 0.0) != k.head.end() || k.tail->has_zero_value();
                else return k.on == 0.0 || k.off == 0.0;
            },
            kind_);
    }

    const auto& kind() const { return kind_; }

private:
    using Kind = std::variant<Constant, Geometric, Polynomial, Table, Powers>;
    explicit Rule(Kind k) : kind_(std::move(k)) {}

    static bool is_power(std::int64_t base, std::int64_t n) {
        if (n < base) return false;
        while (n % base == 0) n /= base;
        return n == 1;
    }

    // sum_{j >= a} j^s for s < -1, by an explicit head and Euler-Maclaurin for the rest.
    static double zeta_tail(double s, double a) {
        double head = 0.0;
        double j = a;
        for (; j < a + 64.0; j += 1.0) head += std::pow(j, s);
        double J = j;
        double tail = std::pow(J, s + 1.0) / (-s - 1.0) + std::pow(J, s) / 2.0 - s * std::pow(J, s - 1.0) / 12.0 +
                      s * (s - 1.0) * (s - 2.0) * std::pow(J, s - 3.0) / 720.0;
        return head + tail;
    }

    Kind kind_;
};

namespace detail {

class RuleParser {
public:
    explicit RuleParser(std::string_view s) : s_(s) {}

    Rule parse_all() {
        Rule r = parse_rule();
        skip_ws();
        if (pos_ != s_.size()) fail("trailing text");
        return r;
    }

private:
    Rule parse_rule() {
        std::string word = parse_word();
        if (word == "constant") return Rule::constant(nonzero(parse_number()));
        if (word == "geometric") {
            double a = nonzero(parse_number());
            return Rule::geometric(a, nonzero(parse_number()));
        }
        if (word == "polynomial") {
            double c = nonzero(parse_number());
            return Rule::polynomial(c, parse_number());
        }
        if (word == "powers") {
            double base = parse_number();
            if (base < 2.0 || base != std::floor(base)) fail("powers base must be an integer >= 2");
            double on = nonzero(parse_number());
            return Rule::powers(std::int64_t(base), on, nonzero(parse_number()));
        }
        if (word == "table") {
            expect('[');
            std::vector<double> head;
            skip_ws();
            if (peek() != ']') {
                head.push_back(nonzero(parse_number()));
                while (skip_ws(), peek() == ',') {
                    ++pos_;
                    head.push_back(nonzero(parse_number()));
                }
            }
            expect(']');
            if (parse_word() != "then") fail("expected 'then'");
            return Rule::table(std::move(head), parse_rule());
        }
        fail("unknown rule kind '" + word + "'");
    }

    double parse_number() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                    s_[pos_] == '-' || s_[pos_] == '+' || s_[pos_] == 'e' || s_[pos_] == 'E'))
            ++pos_;
        std::string tok(s_.substr(start, pos_ - start));
        if (tok.empty()) fail("expected a number");
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            fail("malformed number '" + tok + "'");
        }
        if (used != tok.size() || !std::isfinite(v)) fail("malformed number '" + tok + "'");
        return v;
    }

    std::string parse_word() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        return std::string(s_.substr(start, pos_ - start));
    }

    double nonzero(double v) {
        if (v == 0.0) fail("rule values must be nonzero");
        return v;
    }
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw RuleError("rule '" + std::string(s_) + "': " + msg);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline Rule Rule::parse(std::string_view text) { return detail::RuleParser(text).parse_all(); }

}  // namespace treeshift
