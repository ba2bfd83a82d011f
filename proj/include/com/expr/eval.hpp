#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "com/error.hpp"
#include "com/expr/ast.hpp"
#include "com/schema.hpp"
#include "com/store.hpp"
#include "com/vector.hpp"

namespace com::expr {

/// Names visible to an expression: dimensions of `concept` (the implicit
/// this) plus explicitly bound variables, which shadow dimensions.
struct Scope {
    std::optional<ConceptId> concept_id;
    std::map<std::string, ConceptId, std::less<>> bindings;
};

namespace detail {

inline auto type_name(const Schema& schema, ConceptId t) -> std::string {
    return t == Schema::kRoot ? std::string("NULL") : schema.name_of(t);
}

[[noreturn]] inline void mismatch(const Schema& schema, std::string_view what, ConceptId a, ConceptId b,
                                  std::size_t pos) {
    fail(Errc::type_mismatch,
         std::string(what) + " on " + type_name(schema, a) + " and " + type_name(schema, b) + " at " +
             std::to_string(pos),
         pos);
}

}  // namespace detail

/// Result type of a binary node; Root stands for the type of NULL.
inline auto binary_type(const Schema& schema, BinaryOp op, ConceptId l, ConceptId r, std::size_t pos = 0)
    -> ConceptId {
    const bool ln = l == Schema::kRoot;
    const bool rn = r == Schema::kRoot;
    if (op == BinaryOp::logical_and || op == BinaryOp::logical_or) {
        if ((ln || l == Schema::kBoolean) && (rn || r == Schema::kBoolean)) {
            return Schema::kBoolean;
        }
        detail::mismatch(schema, binary_op_text(op), l, r, pos);
    }
    if (is_arithmetic(op)) {
        if (ln && rn) {
            return Schema::kRoot;
        }
        const auto a = ln ? r : l;
        const auto b = rn ? l : r;
        if (is_numeric_type(a) && is_numeric_type(b)) {
            if (op == BinaryOp::div || a == Schema::kDouble || b == Schema::kDouble) {
                return Schema::kDouble;
            }
            return Schema::kInteger;
        }
        if (op == BinaryOp::add && a == Schema::kString && b == Schema::kString) {
            return Schema::kString;
        }
        detail::mismatch(schema, binary_op_text(op), l, r, pos);
    }
    // comparison
    if (ln || rn || (is_numeric_type(l) && is_numeric_type(r))) {
        return Schema::kBoolean;
    }
    if (l != r) {
        detail::mismatch(schema, binary_op_text(op), l, r, pos);
    }
    if (schema.is_user(l) && op != BinaryOp::eq && op != BinaryOp::ne) {
        detail::mismatch(schema, binary_op_text(op), l, r, pos);
    }
    return Schema::kBoolean;
}

/// Static type of an expression (TUPLE and ACCU excluded).
inline auto infer_type(const Schema& schema, const Scope& scope, const ExprPtr& e) -> ConceptId {
    return std::visit(
        [&](const auto& x) -> ConceptId {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Literal>) {
                switch (x.value.kind()) {
                case ValueKind::integer: return Schema::kInteger;
                case ValueKind::real: return Schema::kDouble;
                case ValueKind::text: return Schema::kString;
                case ValueKind::boolean: return Schema::kBoolean;
                default: return Schema::kRoot;
                }
            } else if constexpr (std::is_same_v<T, ColumnRef>) {
                if (auto it = scope.bindings.find(x.name); it != scope.bindings.end()) {
                    return it->second;
                }
                if (scope.concept_id && x.name == kThis) {
                    return *scope.concept_id;
                }
                if (scope.concept_id) {
                    if (auto found = schema.try_resolve_dimension(*scope.concept_id, x.name)) {
                        return found->second.range;
                    }
                }
                fail(Errc::unknown_column,
                     "unknown column [" + x.name + "]" +
                         (scope.concept_id ? " in '" + schema.name_of(*scope.concept_id) + "'" : std::string()) + " at " +
                         std::to_string(e->position),
                     e->position);
            } else if constexpr (std::is_same_v<T, Path>) {
                const auto head = infer_type(schema, scope, x.head);
                if (head == Schema::kRoot) {
                    return Schema::kRoot;
                }
                if (!schema.is_user(head)) {
                    fail(Errc::type_mismatch,
                         "cannot follow [" + x.dimension + "] from " + schema.name_of(head) + " at " +
                             std::to_string(e->position),
                         e->position);
                }
                if (auto found = schema.try_resolve_dimension(head, x.dimension)) {
                    return found->second.range;
                }
                fail(Errc::unknown_column,
                     "unknown column [" + x.dimension + "] in '" + schema.name_of(head) + "' at " +
                         std::to_string(e->position),
                     e->position);
            } else if constexpr (std::is_same_v<T, Binary>) {
                return binary_type(schema, x.op, infer_type(schema, scope, x.lhs), infer_type(schema, scope, x.rhs),
                                   e->position);
            } else if constexpr (std::is_same_v<T, Unary>) {
                const auto a = infer_type(schema, scope, x.arg);
                if (x.op == UnaryOp::negate && (a == Schema::kRoot || is_numeric_type(a))) {
                    return a;
                }
                if (x.op == UnaryOp::logical_not && (a == Schema::kRoot || a == Schema::kBoolean)) {
                    return Schema::kBoolean;
                }
                fail(Errc::type_mismatch,
                     std::string(x.op == UnaryOp::negate ? "-" : "!") + " on " + detail::type_name(schema, a) +
                         " at " + std::to_string(e->position),
                     e->position);
            } else if constexpr (std::is_same_v<T, Call>) {
                std::vector<ConceptId> args;
                for (const auto& a : x.args) {
                    args.push_back(infer_type(schema, scope, a));
                }
                auto arity = [&](std::size_t lo, std::size_t hi) {
                    if (args.size() < lo || args.size() > hi) {
                        fail(Errc::type_mismatch, x.function + " takes " + std::to_string(lo) + " argument(s) at " +
                                                      std::to_string(e->position),
                             e->position);
                    }
                };
                if (x.function == "ABS") {
                    arity(1, 1);
                    if (args[0] != Schema::kRoot && !is_numeric_type(args[0])) {
                        detail::mismatch(schema, "ABS", args[0], args[0], e->position);
                    }
                    return args[0];
                }
                if (x.function == "ISEMPTY") {
                    arity(1, 1);
                    return Schema::kBoolean;
                }
                if (x.function == "COALESCE") {
                    arity(1, std::numeric_limits<std::size_t>::max());
                    auto t = Schema::kRoot;
                    for (auto a : args) {
                        if (a == Schema::kRoot || a == t) {
                            continue;
                        }
                        if (t == Schema::kRoot) {
                            t = a;
                        } else if (is_numeric_type(a) && is_numeric_type(t)) {
                            t = Schema::kDouble;
                        } else {
                            detail::mismatch(schema, "COALESCE", t, a, e->position);
                        }
                    }
                    return t;
                }
                fail(Errc::unknown_column, "unknown function " + x.function + " at " + std::to_string(e->position),
                     e->position);
            } else {
                fail(Errc::type_mismatch,
                     "TUPLE and ACCU may only form a whole column definition (at " + std::to_string(e->position) + ")",
                     e->position);
            }
        },
        e->node);
}

/// Row set an expression is evaluated over. Without a concept, every name
/// must come from `bindings`.
struct EvalContext {
    const Store& store;
    std::optional<ConceptId> concept_id;
    std::vector<Ordinal> rows;
    std::map<std::string, Vector, std::less<>> bindings;

    /// All elements of `concept`.
    static auto over_extent(const Store& store, ConceptId concept_id) -> EvalContext {
        std::vector<Ordinal> rows(store.extent_size(concept_id));
        std::iota(rows.begin(), rows.end(), Ordinal{0});
        return EvalContext{store, concept_id, std::move(rows), {}};
    }

    [[nodiscard]] auto size() const -> std::size_t {
        if (concept_id || bindings.empty()) {
            return rows.size();
        }
        return bindings.begin()->second.size();
    }

    [[nodiscard]] auto scope() const -> Scope {
        Scope s{concept_id, {}};
        for (const auto& [name, v] : bindings) {
            s.bindings.emplace(name, v.type());
        }
        return s;
    }
};

namespace detail {

inline auto ordinals_of(const Vector& v) -> std::vector<Ordinal> {
    std::vector<Ordinal> out(v.size(), -1);
    if (v.storage() != StorageKind::integer) {
        return out;
    }
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (v.valid(k)) {
            out[k] = v.ints()[k];
        }
    }
    return out;
}

inline auto arithmetic(BinaryOp op, const Value& a, const Value& b, ConceptId type) -> Value {
    if (a.is_empty() || b.is_empty()) {
        return Value{};
    }
    if (type == Schema::kString) {
        return Value::text(a.as_text() + b.as_text());
    }
    if (type == Schema::kInteger) {
        const auto x = a.as_integer();
        const auto y = b.as_integer();
        std::int64_t r = 0;
        bool overflow = false;
        switch (op) {
        case BinaryOp::add: overflow = __builtin_add_overflow(x, y, &r); break;
        case BinaryOp::sub: overflow = __builtin_sub_overflow(x, y, &r); break;
        case BinaryOp::mul: overflow = __builtin_mul_overflow(x, y, &r); break;
        default: break;
        }
        return overflow ? Value{} : Value::integer(r);
    }
    const double x = a.to_double();
    const double y = b.to_double();
    switch (op) {
    case BinaryOp::add: return Value::real(x + y);
    case BinaryOp::sub: return Value::real(x - y);
    case BinaryOp::mul: return Value::real(x * y);
    case BinaryOp::div:
        if (y == 0.0) {
            return Value{};
        }
        return Value::real(x / y);
    default: return Value{};
    }
}

inline auto comparison(BinaryOp op, const Value& a, const Value& b) -> Value {
    if (a.is_empty() || b.is_empty()) {
        return Value{};
    }
    int c = 0;
    if (a.is_numeric() && b.is_numeric() && a.kind() != b.kind()) {
        const double x = a.to_double();
        const double y = b.to_double();
        c = x < y ? -1 : (y < x ? 1 : 0);
    } else {
        c = compare_values(a, b);
    }
    switch (op) {
    case BinaryOp::eq: return Value::boolean(c == 0);
    case BinaryOp::ne: return Value::boolean(c != 0);
    case BinaryOp::lt: return Value::boolean(c < 0);
    case BinaryOp::le: return Value::boolean(c <= 0);
    case BinaryOp::gt: return Value::boolean(c > 0);
    case BinaryOp::ge: return Value::boolean(c >= 0);
    default: return Value{};
    }
}

inline auto truthy(const Value& v) -> bool { return v.kind() == ValueKind::boolean && v.as_boolean(); }

}  // namespace detail

/// Column-at-a-time evaluation of an expression over the context's rows.
/// Empty operands of arithmetic and comparisons yield empty cells.
inline auto evaluate(const EvalContext& ctx, const ExprPtr& e) -> Vector {
    const auto& schema = ctx.store.schema();
    const auto n = ctx.size();
    return std::visit(
        [&](const auto& x) -> Vector {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Literal>) {
                const auto type = infer_type(schema, Scope{}, e);
                Vector out(type, n);
                if (!x.value.is_empty()) {
                    for (std::size_t k = 0; k < n; ++k) {
                        out.set(k, x.value);
                    }
                }
                return out;
            } else if constexpr (std::is_same_v<T, ColumnRef>) {
                if (auto it = ctx.bindings.find(x.name); it != ctx.bindings.end()) {
                    return it->second;
                }
                if (ctx.concept_id && x.name == kThis) {
                    Vector out(*ctx.concept_id, n);
                    for (std::size_t k = 0; k < n; ++k) {
                        out.set(k, Value::integer(ctx.rows[k]));
                    }
                    return out;
                }
                infer_type(schema, ctx.scope(), e);
                return ctx.store.gather(*ctx.concept_id, ctx.rows, x.name);
            } else if constexpr (std::is_same_v<T, Path>) {
                const auto head = evaluate(ctx, x.head);
                if (head.type() == Schema::kRoot) {
                    return Vector(Schema::kRoot, n);
                }
                if (!schema.is_user(head.type()) || !schema.try_resolve_dimension(head.type(), x.dimension)) {
                    infer_type(schema, ctx.scope(), e);
                }
                const auto rows = detail::ordinals_of(head);
                return ctx.store.gather(head.type(), rows, x.dimension);
            } else if constexpr (std::is_same_v<T, Binary>) {
                const auto l = evaluate(ctx, x.lhs);
                const auto r = evaluate(ctx, x.rhs);
                const auto type = binary_type(schema, x.op, l.type(), r.type(), e->position);
                Vector out(type, n);
                if (x.op == BinaryOp::logical_and || x.op == BinaryOp::logical_or) {
                    for (std::size_t k = 0; k < n; ++k) {
                        const bool a = detail::truthy(l.get(k));
                        const bool b = detail::truthy(r.get(k));
                        out.set(k, Value::boolean(x.op == BinaryOp::logical_and ? (a && b) : (a || b)));
                    }
                    return out;
                }
                if (l.type() == Schema::kRoot || r.type() == Schema::kRoot) {
                    return out;
                }
                // fast path for the common numeric cases
                if (is_arithmetic(x.op) && l.storage() == StorageKind::real && r.storage() == StorageKind::real) {
                    for (std::size_t k = 0; k < n; ++k) {
                        if (!l.valid(k) || !r.valid(k)) {
                            continue;
                        }
                        const double a = l.reals()[k];
                        const double b = r.reals()[k];
                        double v = 0.0;
                        switch (x.op) {
                        case BinaryOp::add: v = a + b; break;
                        case BinaryOp::sub: v = a - b; break;
                        case BinaryOp::mul: v = a * b; break;
                        default:
                            if (b == 0.0) {
                                continue;
                            }
                            v = a / b;
                        }
                        out.reals()[k] = v;
                        out.mask()[k] = 1;
                    }
                    return out;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const auto a = l.get(k);
                    const auto b = r.get(k);
                    out.set(k, is_arithmetic(x.op) ? detail::arithmetic(x.op, a, b, type)
                                                   : detail::comparison(x.op, a, b));
                }
                return out;
            } else if constexpr (std::is_same_v<T, Unary>) {
                const auto a = evaluate(ctx, x.arg);
                if (x.op == UnaryOp::logical_not) {
                    if (a.type() != Schema::kRoot && a.type() != Schema::kBoolean) {
                        infer_type(schema, ctx.scope(), e);
                    }
                    Vector out(Schema::kBoolean, n);
                    for (std::size_t k = 0; k < n; ++k) {
                        out.set(k, Value::boolean(!detail::truthy(a.get(k))));
                    }
                    return out;
                }
                if (a.type() != Schema::kRoot && !is_numeric_type(a.type())) {
                    infer_type(schema, ctx.scope(), e);
                }
                Vector out(a.type(), n);
                for (std::size_t k = 0; k < n; ++k) {
                    const auto v = a.get(k);
                    if (v.kind() == ValueKind::integer) {
                        if (v.as_integer() != std::numeric_limits<std::int64_t>::min()) {
                            out.set(k, Value::integer(-v.as_integer()));
                        }
                    } else if (v.kind() == ValueKind::real) {
                        out.set(k, Value::real(-v.as_real()));
                    }
                }
                return out;
            } else if constexpr (std::is_same_v<T, Call>) {
                std::vector<Vector> args;
                Scope scope;
                for (const auto& a : x.args) {
                    args.push_back(evaluate(ctx, a));
                    scope.bindings.emplace("#" + std::to_string(scope.bindings.size()), args.back().type());
                }
                std::vector<ExprPtr> refs;
                for (std::size_t i = 0; i < args.size(); ++i) {
                    refs.push_back(make(ColumnRef{"#" + std::to_string(i)}));
                }
                const auto type = infer_type(schema, scope, make(Call{x.function, refs}, e->position));
                Vector out(type, n);
                for (std::size_t k = 0; k < n; ++k) {
                    if (x.function == "ISEMPTY") {
                        out.set(k, Value::boolean(!args[0].valid(k)));
                    } else if (x.function == "ABS") {
                        const auto v = args[0].get(k);
                        if (v.kind() == ValueKind::integer) {
                            if (v.as_integer() != std::numeric_limits<std::int64_t>::min()) {
                                out.set(k, Value::integer(v.as_integer() < 0 ? -v.as_integer() : v.as_integer()));
                            }
                        } else if (v.kind() == ValueKind::real) {
                            out.set(k, Value::real(std::fabs(v.as_real())));
                        }
                    } else {
                        for (const auto& a : args) {
                            if (a.valid(k)) {
                                out.set(k, a.get(k));
                                break;
                            }
                        }
                    }
                }
                return out;
            } else {
                infer_type(schema, ctx.scope(), e);
                return Vector(Schema::kRoot, n);
            }
        },
        e->node);
}

/// Boolean predicate per row; empty and false both count as false.
inline auto evaluate_predicate(const EvalContext& ctx, const ExprPtr& e) -> std::vector<std::uint8_t> {
    const auto t = infer_type(ctx.store.schema(), ctx.scope(), e);
    if (t != Schema::kBoolean && t != Schema::kRoot) {
        fail(Errc::type_mismatch, "predicate must be Boolean, got " + ctx.store.schema().name_of(t));
    }
    const auto v = evaluate(ctx, e);
    std::vector<std::uint8_t> out(v.size(), 0);
    if (t == Schema::kBoolean) {
        for (std::size_t k = 0; k < v.size(); ++k) {
            out[k] = v.valid(k) && v.bools()[k] ? 1 : 0;
        }
    }
    return out;
}

}  // namespace com::expr
