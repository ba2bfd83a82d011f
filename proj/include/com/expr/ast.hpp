#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "com/value.hpp"

namespace com::expr {

enum class BinaryOp { add, sub, mul, div, eq, ne, lt, le, gt, ge, logical_and, logical_or };
enum class UnaryOp { negate, logical_not };
enum class Aggregate { sum, count, min, max, avg };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Literal {
    Value value;
};

/// Dimension of the current element; `this` names the element itself.
struct ColumnRef {
    std::string name;
};

/// head.[dimension]
struct Path {
    ExprPtr head;
    std::string dimension;
};

struct Binary {
    BinaryOp op;
    ExprPtr lhs;
    ExprPtr rhs;
};

struct Unary {
    UnaryOp op;
    ExprPtr arg;
};

/// TUPLE(dim=expr, ...): identity of an element of the output concept.
struct TupleCtor {
    std::vector<std::pair<std::string, ExprPtr>> fields;
};

/// ACCU([Facts], group, measure, AGG)
struct AccuCtor {
    std::string fact_table;
    ExprPtr group;
    ExprPtr measure;
    Aggregate aggregate;
};

struct Call {
    std::string function;
    std::vector<ExprPtr> args;
};

struct Expr {
    std::variant<Literal, ColumnRef, Path, Binary, Unary, TupleCtor, AccuCtor, Call> node;
    std::size_t position = 0;
};

inline constexpr std::string_view kThis = "this";

template <typename T>
auto make(T node, std::size_t position = 0) -> ExprPtr {
    return std::make_shared<const Expr>(Expr{std::move(node), position});
}

inline auto binary_op_text(BinaryOp op) -> std::string_view {
    switch (op) {
    case BinaryOp::add: return "+";
    case BinaryOp::sub: return "-";
    case BinaryOp::mul: return "*";
    case BinaryOp::div: return "/";
    case BinaryOp::eq: return "==";
    case BinaryOp::ne: return "!=";
    case BinaryOp::lt: return "<";
    case BinaryOp::le: return "<=";
    case BinaryOp::gt: return ">";
    case BinaryOp::ge: return ">=";
    case BinaryOp::logical_and: return "&&";
    case BinaryOp::logical_or: return "||";
    }
    return "?";
}

inline auto aggregate_name(Aggregate a) -> std::string_view {
    switch (a) {
    case Aggregate::sum: return "SUM";
    case Aggregate::count: return "COUNT";
    case Aggregate::min: return "MIN";
    case Aggregate::max: return "MAX";
    case Aggregate::avg: return "AVG";
    }
    return "?";
}

inline auto is_comparison(BinaryOp op) -> bool {
    return op == BinaryOp::eq || op == BinaryOp::ne || op == BinaryOp::lt || op == BinaryOp::le ||
           op == BinaryOp::gt || op == BinaryOp::ge;
}

inline auto is_arithmetic(BinaryOp op) -> bool {
    return op == BinaryOp::add || op == BinaryOp::sub || op == BinaryOp::mul || op == BinaryOp::div;
}

/// Structural equality, ignoring source positions.
inline auto ast_equal(const ExprPtr& a, const ExprPtr& b) -> bool {
    if (!a || !b) {
        return a == b;
    }
    if (a->node.index() != b->node.index()) {
        return false;
    }
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b->node);
            if constexpr (std::is_same_v<T, Literal>) {
                return x.value == y.value;
            } else if constexpr (std::is_same_v<T, ColumnRef>) {
                return x.name == y.name;
            } else if constexpr (std::is_same_v<T, Path>) {
                return x.dimension == y.dimension && ast_equal(x.head, y.head);
            } else if constexpr (std::is_same_v<T, Binary>) {
                return x.op == y.op && ast_equal(x.lhs, y.lhs) && ast_equal(x.rhs, y.rhs);
            } else if constexpr (std::is_same_v<T, Unary>) {
                return x.op == y.op && ast_equal(x.arg, y.arg);
            } else if constexpr (std::is_same_v<T, TupleCtor>) {
                if (x.fields.size() != y.fields.size()) {
                    return false;
                }
                for (std::size_t i = 0; i < x.fields.size(); ++i) {
                    if (x.fields[i].first != y.fields[i].first || !ast_equal(x.fields[i].second, y.fields[i].second)) {
                        return false;
                    }
                }
                return true;
            } else if constexpr (std::is_same_v<T, AccuCtor>) {
                return x.fact_table == y.fact_table && x.aggregate == y.aggregate && ast_equal(x.group, y.group) &&
                       ast_equal(x.measure, y.measure);
            } else {
                if (x.function != y.function || x.args.size() != y.args.size()) {
                    return false;
                }
                for (std::size_t i = 0; i < x.args.size(); ++i) {
                    if (!ast_equal(x.args[i], y.args[i])) {
                        return false;
                    }
                }
                return true;
            }
        },
        a->node);
}

inline auto literal_source(const Value& v) -> std::string {
    switch (v.kind()) {
    case ValueKind::empty: return "NULL";
    case ValueKind::real: {
        auto s = format_real(v.as_real());
        if (s.find_first_of(".eEn") == std::string::npos) {
            s += ".0";
        }
        return s;
    }
    default: return to_string(v);
    }
}

/// Canonical source text; binary nodes are fully parenthesized so the output
/// reparses to an equal tree.
inline auto to_source(const ExprPtr& e) -> std::string {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Literal>) {
                return literal_source(x.value);
            } else if constexpr (std::is_same_v<T, ColumnRef>) {
                return "[" + x.name + "]";
            } else if constexpr (std::is_same_v<T, Path>) {
                return to_source(x.head) + ".[" + x.dimension + "]";
            } else if constexpr (std::is_same_v<T, Binary>) {
                return "(" + to_source(x.lhs) + " " + std::string(binary_op_text(x.op)) + " " + to_source(x.rhs) + ")";
            } else if constexpr (std::is_same_v<T, Unary>) {
                const bool simple = std::holds_alternative<ColumnRef>(x.arg->node) ||
                                    std::holds_alternative<Path>(x.arg->node) ||
                                    std::holds_alternative<Binary>(x.arg->node) ||
                                    std::holds_alternative<Call>(x.arg->node);
                const auto inner = to_source(x.arg);
                return std::string(x.op == UnaryOp::negate ? "-" : "!") + (simple ? inner : "(" + inner + ")");
            } else if constexpr (std::is_same_v<T, TupleCtor>) {
                std::string out = "TUPLE(";
                for (std::size_t i = 0; i < x.fields.size(); ++i) {
                    out += (i ? ", " : "") + x.fields[i].first + "=" + to_source(x.fields[i].second);
                }
                return out + ")";
            } else if constexpr (std::is_same_v<T, AccuCtor>) {
                return "ACCU([" + x.fact_table + "], " + to_source(x.group) + ", " + to_source(x.measure) + ", " +
                       std::string(aggregate_name(x.aggregate)) + ")";
            } else {
                std::string out = x.function + "(";
                for (std::size_t i = 0; i < x.args.size(); ++i) {
                    out += (i ? ", " : "") + to_source(x.args[i]);
                }
                return out + ")";
            }
        },
        e->node);
}

}  // namespace com::expr
