#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "com/error.hpp"
#include "com/expr/ast.hpp"

namespace com::expr {

enum class TokenKind {
    end,
    bracket_ident,  // [name]
    word,           // bare identifier or keyword
    integer,
    decimal,
    string,
    plus,
    minus,
    star,
    slash,
    eq,
    ne,
    lt,
    le,
    gt,
    ge,
    and_and,
    or_or,
    bang,
    lparen,
    rparen,
    comma,
    assign,
    dot,
};

struct Token {
    TokenKind kind = TokenKind::end;
    std::string text;
    std::size_t position = 0;
    std::int64_t integer = 0;
    double decimal = 0.0;
};

inline auto lex(std::string_view src) -> std::vector<Token> {
    std::vector<Token> out;
    std::size_t i = 0;
    auto push = [&](TokenKind k, std::size_t pos, std::size_t len) {
        out.push_back(Token{k, std::string(src.substr(pos, len)), pos});
        i = pos + len;
    };
    while (i < src.size()) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (c == '[') {
            const auto close = src.find_first_of("]\n", i + 1);
            if (close == std::string_view::npos || src[close] != ']') {
                fail(Errc::lex_error, "unterminated '[' at " + std::to_string(start), start);
            }
            out.push_back(Token{TokenKind::bracket_ident, std::string(src.substr(i + 1, close - i - 1)), start});
            i = close + 1;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i + 1;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
                ++j;
            }
            push(TokenKind::word, start, j - start);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
                ++j;
            }
            bool is_decimal = false;
            if (j + 1 < src.size() && src[j] == '.' && std::isdigit(static_cast<unsigned char>(src[j + 1]))) {
                is_decimal = true;
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
                    ++j;
                }
            }
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) {
                    ++k;
                }
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    is_decimal = true;
                    j = k;
                    while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
                        ++j;
                    }
                }
            }
            Token t{is_decimal ? TokenKind::decimal : TokenKind::integer, std::string(src.substr(start, j - start)),
                    start};
            const char* first = src.data() + start;
            const char* last = src.data() + j;
            std::from_chars_result r{};
            if (is_decimal) {
                r = std::from_chars(first, last, t.decimal);
            } else {
                r = std::from_chars(first, last, t.integer);
            }
            if (r.ec != std::errc{} || r.ptr != last) {
                fail(Errc::lex_error, "numeric literal out of range at " + std::to_string(start), start);
            }
            out.push_back(std::move(t));
            i = j;
            continue;
        }
        if (c == '"') {
            std::string text;
            std::size_t j = i + 1;
            bool closed = false;
            while (j < src.size()) {
                if (src[j] == '\\' && j + 1 < src.size()) {
                    const char e = src[j + 1];
                    text.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
                    j += 2;
                    continue;
                }
                if (src[j] == '"') {
                    closed = true;
                    break;
                }
                text.push_back(src[j++]);
            }
            if (!closed) {
                fail(Errc::lex_error, "unterminated string at " + std::to_string(start), start);
            }
            out.push_back(Token{TokenKind::string, std::move(text), start});
            i = j + 1;
            continue;
        }
        const char n = i + 1 < src.size() ? src[i + 1] : '\0';
        switch (c) {
        case '+': push(TokenKind::plus, start, 1); break;
        case '-': push(TokenKind::minus, start, 1); break;
        case '*': push(TokenKind::star, start, 1); break;
        case '/': push(TokenKind::slash, start, 1); break;
        case '(': push(TokenKind::lparen, start, 1); break;
        case ')': push(TokenKind::rparen, start, 1); break;
        case ',': push(TokenKind::comma, start, 1); break;
        case '.': push(TokenKind::dot, start, 1); break;
        case '=':
            if (n == '=') {
                push(TokenKind::eq, start, 2);
            } else {
                push(TokenKind::assign, start, 1);
            }
            break;
        case '!':
            if (n == '=') {
                push(TokenKind::ne, start, 2);
            } else {
                push(TokenKind::bang, start, 1);
            }
            break;
        case '<':
            if (n == '=') {
                push(TokenKind::le, start, 2);
            } else {
                push(TokenKind::lt, start, 1);
            }
            break;
        case '>':
            if (n == '=') {
                push(TokenKind::ge, start, 2);
            } else {
                push(TokenKind::gt, start, 1);
            }
            break;
        case '&':
            if (n != '&') {
                fail(Errc::lex_error, "expected '&&' at " + std::to_string(start), start);
            }
            push(TokenKind::and_and, start, 2);
            break;
        case '|':
            if (n != '|') {
                fail(Errc::lex_error, "expected '||' at " + std::to_string(start), start);
            }
            push(TokenKind::or_or, start, 2);
            break;
        default:
            fail(Errc::lex_error, std::string("unexpected character '") + c + "' at " + std::to_string(start), start);
        }
    }
    out.push_back(Token{TokenKind::end, "", src.size()});
    return out;
}

namespace detail {

inline auto upper(std::string_view s) -> std::string {
    std::string out(s);
    for (auto& ch : out) {
        ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view src) : tokens_(lex(src)) {}

    auto toplevel() -> ExprPtr {
        ExprPtr result;
        if (peek().kind == TokenKind::word && peek(1).kind == TokenKind::lparen) {
            const auto kw = upper(peek().text);
            if (kw == "TUPLE") {
                result = tuple_ctor();
            } else if (kw == "ACCU") {
                result = accu_ctor();
            }
        }
        if (!result) {
            result = expression();
        }
        expect(TokenKind::end, "end of input");
        return result;
    }

    auto expression() -> ExprPtr { return logical_or(); }

private:
    [[nodiscard]] auto peek(std::size_t ahead = 0) const -> const Token& {
        return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
    }

    auto advance() -> const Token& { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    auto accept(TokenKind k) -> bool {
        if (peek().kind == k) {
            advance();
            return true;
        }
        return false;
    }

    auto expect(TokenKind k, std::string_view what) -> const Token& {
        if (peek().kind != k) {
            error(what);
        }
        return advance();
    }

    [[noreturn]] void error(std::string_view expected) const {
        const auto& t = peek();
        const std::string found = t.kind == TokenKind::end ? "end of input" : "'" + t.text + "'";
        fail(Errc::parse_error,
             "expected " + std::string(expected) + " at " + std::to_string(t.position) + ", found " + found,
             t.position);
    }

    auto tuple_ctor() -> ExprPtr {
        const auto pos = advance().position;
        expect(TokenKind::lparen, "'('");
        TupleCtor t;
        do {
            const auto& name = expect(TokenKind::word, "field name");
            std::string field = name.text;
            expect(TokenKind::assign, "'='");
            t.fields.emplace_back(std::move(field), expression());
        } while (accept(TokenKind::comma));
        expect(TokenKind::rparen, "')'");
        return make(std::move(t), pos);
    }

    auto accu_ctor() -> ExprPtr {
        const auto pos = advance().position;
        expect(TokenKind::lparen, "'('");
        const auto& fact = expect(TokenKind::bracket_ident, "fact table '[name]'");
        std::string fact_table = fact.text;
        expect(TokenKind::comma, "','");
        auto group = path();
        expect(TokenKind::comma, "','");
        auto measure = expression();
        expect(TokenKind::comma, "','");
        const auto& agg = expect(TokenKind::word, "aggregate name");
        const auto name = upper(agg.text);
        Aggregate a{};
        if (name == "SUM") {
            a = Aggregate::sum;
        } else if (name == "COUNT") {
            a = Aggregate::count;
        } else if (name == "MIN") {
            a = Aggregate::min;
        } else if (name == "MAX") {
            a = Aggregate::max;
        } else if (name == "AVG") {
            a = Aggregate::avg;
        } else {
            fail(Errc::parse_error, "unknown aggregate '" + agg.text + "' at " + std::to_string(agg.position),
                 agg.position);
        }
        expect(TokenKind::rparen, "')'");
        return make(AccuCtor{std::move(fact_table), std::move(group), std::move(measure), a}, pos);
    }

    auto logical_or() -> ExprPtr {
        auto lhs = logical_and();
        while (peek().kind == TokenKind::or_or) {
            const auto pos = advance().position;
            lhs = make(Binary{BinaryOp::logical_or, lhs, logical_and()}, pos);
        }
        return lhs;
    }

    auto logical_and() -> ExprPtr {
        auto lhs = comparison();
        while (peek().kind == TokenKind::and_and) {
            const auto pos = advance().position;
            lhs = make(Binary{BinaryOp::logical_and, lhs, comparison()}, pos);
        }
        return lhs;
    }

    auto comparison() -> ExprPtr {
        auto lhs = additive();
        BinaryOp op{};
        switch (peek().kind) {
        case TokenKind::eq: op = BinaryOp::eq; break;
        case TokenKind::ne: op = BinaryOp::ne; break;
        case TokenKind::lt: op = BinaryOp::lt; break;
        case TokenKind::le: op = BinaryOp::le; break;
        case TokenKind::gt: op = BinaryOp::gt; break;
        case TokenKind::ge: op = BinaryOp::ge; break;
        default: return lhs;
        }
        const auto pos = advance().position;
        return make(Binary{op, lhs, additive()}, pos);
    }

    auto additive() -> ExprPtr {
        auto lhs = multiplicative();
        while (peek().kind == TokenKind::plus || peek().kind == TokenKind::minus) {
            const auto op = peek().kind == TokenKind::plus ? BinaryOp::add : BinaryOp::sub;
            const auto pos = advance().position;
            lhs = make(Binary{op, lhs, multiplicative()}, pos);
        }
        return lhs;
    }

    auto multiplicative() -> ExprPtr {
        auto lhs = unary();
        while (peek().kind == TokenKind::star || peek().kind == TokenKind::slash) {
            const auto op = peek().kind == TokenKind::star ? BinaryOp::mul : BinaryOp::div;
            const auto pos = advance().position;
            lhs = make(Binary{op, lhs, unary()}, pos);
        }
        return lhs;
    }

    auto unary() -> ExprPtr {
        if (peek().kind == TokenKind::minus || peek().kind == TokenKind::bang) {
            const auto op = peek().kind == TokenKind::minus ? UnaryOp::negate : UnaryOp::logical_not;
            const auto pos = advance().position;
            return make(Unary{op, primary()}, pos);
        }
        return primary();
    }

    auto path() -> ExprPtr {
        const auto& first = expect(TokenKind::bracket_ident, "'[name]'");
        ExprPtr head = make(ColumnRef{first.text}, first.position);
        while (peek().kind == TokenKind::dot) {
            advance();
            const auto& step = expect(TokenKind::bracket_ident, "'[name]' after '.'");
            if (const auto* ref = std::get_if<ColumnRef>(&head->node); ref && ref->name == kThis) {
                head = make(ColumnRef{step.text}, step.position);
            } else {
                head = make(Path{head, step.text}, step.position);
            }
        }
        return head;
    }

    auto primary() -> ExprPtr {
        const auto& t = peek();
        switch (t.kind) {
        case TokenKind::integer: {
            const auto& tok = advance();
            return make(Literal{Value::integer(tok.integer)}, tok.position);
        }
        case TokenKind::decimal: {
            const auto& tok = advance();
            return make(Literal{Value::real(tok.decimal)}, tok.position);
        }
        case TokenKind::string: {
            const auto& tok = advance();
            return make(Literal{Value::text(tok.text)}, tok.position);
        }
        case TokenKind::bracket_ident: return path();
        case TokenKind::lparen: {
            advance();
            auto inner = expression();
            expect(TokenKind::rparen, "')'");
            return inner;
        }
        case TokenKind::word: {
            const auto kw = upper(t.text);
            const auto pos = t.position;
            if (kw == "TRUE" || kw == "FALSE") {
                advance();
                return make(Literal{Value::boolean(kw == "TRUE")}, pos);
            }
            if (kw == "NULL") {
                advance();
                return make(Literal{Value{}}, pos);
            }
            if (kw == "TUPLE" || kw == "ACCU") {
                fail(Errc::parse_error, kw + " is only allowed as the whole definition (at " + std::to_string(pos) + ")",
                     pos);
            }
            if (peek(1).kind == TokenKind::lparen) {
                advance();
                advance();
                Call call{kw, {}};
                if (!accept(TokenKind::rparen)) {
                    do {
                        call.args.push_back(expression());
                    } while (accept(TokenKind::comma));
                    expect(TokenKind::rparen, "')'");
                }
                return make(std::move(call), pos);
            }
            error("operand");
        }
        default: error("operand");
        }
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses a complete definition: an expression, TUPLE(...) or ACCU(...).
inline auto parse_expression(std::string_view src) -> ExprPtr {
    if (src.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        fail(Errc::parse_error, "expected operand at 0, found end of input", 0);
    }
    return detail::Parser(src).toplevel();
}

}  // namespace com::expr
