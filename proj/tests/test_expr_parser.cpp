#include <gtest/gtest.h>

#include <random>

#include "com/expr/parser.hpp"

using namespace com;
using namespace com::expr;

namespace {

auto error_of(std::string_view src) -> std::optional<Error> {
    try {
        parse_expression(src);
    } catch (const Error& e) {
        return e;
    }
    return std::nullopt;
}

// Random trees restricted to shapes the parser itself can produce.
class TreeGen {
public:
    explicit TreeGen(std::uint64_t seed) : rng_(seed) {}

    auto top() -> ExprPtr {
        switch (pick(6)) {
        case 0: {
            TupleCtor t;
            const auto n = 1 + pick(3);
            for (std::size_t i = 0; i < n; ++i) {
                t.fields.emplace_back("f" + std::to_string(i), expr(3));
            }
            return make(std::move(t));
        }
        case 1: {
            static const Aggregate aggs[] = {Aggregate::sum, Aggregate::count, Aggregate::min, Aggregate::max,
                                             Aggregate::avg};
            return make(AccuCtor{"Facts", path(), expr(3), aggs[pick(5)]});
        }
        default: return expr(4);
        }
    }

    auto expr(int depth) -> ExprPtr {
        if (depth == 0) {
            return leaf();
        }
        switch (pick(5)) {
        case 0:
        case 1: {
            static const BinaryOp ops[] = {BinaryOp::add, BinaryOp::sub, BinaryOp::mul, BinaryOp::div,
                                           BinaryOp::eq,  BinaryOp::ne,  BinaryOp::lt,  BinaryOp::le,
                                           BinaryOp::gt,  BinaryOp::ge,  BinaryOp::logical_and, BinaryOp::logical_or};
            return make(Binary{ops[pick(12)], expr(depth - 1), expr(depth - 1)});
        }
        case 2: return make(Unary{pick(2) ? UnaryOp::negate : UnaryOp::logical_not, expr(depth - 1)});
        case 3: {
            Call c{pick(2) ? "ABS" : "COALESCE", {}};
            const auto n = pick(3);
            for (std::size_t i = 0; i < n; ++i) {
                c.args.push_back(expr(depth - 1));
            }
            return make(std::move(c));
        }
        default: return leaf();
        }
    }

private:
    auto pick(std::size_t n) -> std::size_t { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    auto path() -> ExprPtr {
        ExprPtr head = make(ColumnRef{"c" + std::to_string(pick(4))});
        const auto steps = pick(3);
        for (std::size_t i = 0; i < steps; ++i) {
            head = make(Path{head, "d" + std::to_string(pick(4))});
        }
        return head;
    }

    auto leaf() -> ExprPtr {
        switch (pick(6)) {
        case 0: return make(Literal{Value::integer(static_cast<std::int64_t>(rng_() % 100000))});
        case 1: return make(Literal{Value::real(static_cast<double>(rng_() % 100000) / 64.0)});
        case 2: {
            static const std::string alphabet = "ab \"\\x.,[]()\n";
            std::string s;
            const auto n = pick(6);
            for (std::size_t i = 0; i < n; ++i) {
                s.push_back(alphabet[pick(alphabet.size())]);
            }
            return make(Literal{Value::text(s)});
        }
        case 3: return make(Literal{pick(2) ? Value::boolean(true) : Value{}});
        default: return path();
        }
    }

    std::mt19937_64 rng_;
};

}  // namespace

TEST(Lexer, TokensAndPositions) {
    const auto t = lex("[a b].[c] >= 1.5e3 && \"x\\\"y\"");
    ASSERT_EQ(t.size(), 8U);
    EXPECT_EQ(t[0].kind, TokenKind::bracket_ident);
    EXPECT_EQ(t[0].text, "a b");
    EXPECT_EQ(t[2].position, 6U);
    EXPECT_EQ(t[3].kind, TokenKind::ge);
    EXPECT_EQ(t[4].kind, TokenKind::decimal);
    EXPECT_DOUBLE_EQ(t[4].decimal, 1500.0);
    EXPECT_EQ(t[6].text, "x\"y");
    EXPECT_EQ(t[7].kind, TokenKind::end);
}

TEST(Lexer, Errors) {
    for (const auto* src : {"[abc", "\"open", "a & b", "1 ? 2", "99999999999999999999"}) {
        try {
            lex(src);
            ADD_FAILURE() << src;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::lex_error) << src;
        }
    }
    try {
        lex("1 + $");
    } catch (const Error& e) {
        EXPECT_EQ(e.position(), 4U);
    }
}

TEST(Parser, PrecedenceAndAssociativity) {
    EXPECT_EQ(to_source(parse_expression("1 + 2 * 3")), "(1 + (2 * 3))");
    EXPECT_EQ(to_source(parse_expression("1 - 2 - 3")), "((1 - 2) - 3)");
    EXPECT_EQ(to_source(parse_expression("[a] || [b] && [c]")), "([a] || ([b] && [c]))");
    EXPECT_EQ(to_source(parse_expression("-(1 + 2) * [a].[b] >= 3 && !true")),
              "(((-(1 + 2) * [a].[b]) >= 3) && !(true))");
    EXPECT_EQ(to_source(parse_expression("[this].[x]")), "[x]");
    EXPECT_EQ(to_source(parse_expression("coalesce([x], 0)")), "COALESCE([x], 0)");
}

TEST(Parser, Constructors) {
    const auto t = parse_expression("TUPLE(code=[c], n=1)");
    ASSERT_TRUE(std::holds_alternative<TupleCtor>(t->node));
    EXPECT_EQ(std::get<TupleCtor>(t->node).fields.size(), 2U);
    const auto a = parse_expression("ACCU([LineItems], [order], [price] * [qty], sum)");
    ASSERT_TRUE(std::holds_alternative<AccuCtor>(a->node));
    EXPECT_EQ(std::get<AccuCtor>(a->node).aggregate, Aggregate::sum);
    EXPECT_EQ(to_source(a), "ACCU([LineItems], [order], ([price] * [qty]), SUM)");
}

TEST(Parser, ErrorsCarryPositions) {
    struct Case {
        const char* src;
        std::size_t pos;
    };
    for (const auto& c : {Case{"", 0}, Case{"1 +", 3}, Case{"(1", 2}, Case{"1 < 2 < 3", 6}, Case{"1 2", 2},
                          Case{"[a] + TUPLE(x=1)", 6}, Case{"ACCU([F], [g], 1, MEDIAN)", 18}}) {
        const auto e = error_of(c.src);
        ASSERT_TRUE(e.has_value()) << c.src;
        EXPECT_EQ(e->code(), Errc::parse_error) << c.src;
        EXPECT_EQ(e->position(), c.pos) << c.src << ": " << e->what();
    }
    EXPECT_NE(std::string(error_of("1 +")->what()).find("expected operand at 3"), std::string::npos);
}

TEST(Parser, PrintedTreesReparseToEqualTrees) {
    TreeGen gen(20240917);
    for (int i = 0; i < 2000; ++i) {
        const auto tree = gen.top();
        const auto text = to_source(tree);
        ExprPtr back;
        ASSERT_NO_THROW(back = parse_expression(text)) << text;
        ASSERT_TRUE(ast_equal(tree, back)) << text << "\nreprinted: " << to_source(back);
    }
}
