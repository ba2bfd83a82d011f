#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "com/error.hpp"
#include "com/schema.hpp"

namespace com::cli {

/// One CONCEPT declaration as written.
struct ConceptDef {
    std::string name;
    std::string super;  // empty: Root
    std::vector<DimensionSpec> identity;
    std::vector<DimensionSpec> entity;
    std::size_t line = 0;
    std::size_t column = 0;
};

namespace detail {

struct DslToken {
    std::string text;
    std::size_t line;
    std::size_t column;
};

inline auto upper(std::string_view s) -> std::string {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

/// Words, numbers and single-character punctuation; // and # start comments.
inline auto dsl_tokens(std::string_view src, std::size_t first_line) -> std::vector<DslToken> {
    std::vector<DslToken> out;
    std::size_t line = first_line;
    std::size_t col = 1;
    std::size_t i = 0;
    while (i < src.size()) {
        const char c = src[i];
        if (c == '\n') {
            ++line;
            col = 1;
            ++i;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++col;
            ++i;
            continue;
        }
        if (c == '#' || (c == '/' && i + 1 < src.size() && src[i + 1] == '/')) {
            while (i < src.size() && src[i] != '\n') {
                ++i;
            }
            continue;
        }
        const std::size_t start = i;
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) {
                ++i;
            }
        } else if (c == '(' || c == ')' || c == ',') {
            ++i;
        } else {
            fail(Errc::parse_error,
                 "line " + std::to_string(line) + ", column " + std::to_string(col) + ": unexpected '" +
                     std::string(1, c) + "'",
                 line);
        }
        out.push_back(DslToken{std::string(src.substr(start, i - start)), line, col});
        col += i - start;
    }
    return out;
}

}  // namespace detail

/// Parses "CONCEPT name [IN super] [IDENTITY (type name)*] [ENTITY (type name)*]"
/// blocks. Types are concept names, builtin names or CHAR(n). Error
/// positions are line numbers counted from `first_line`.
inline auto parse_schema_dsl(std::string_view src, std::size_t first_line = 1) -> std::vector<ConceptDef> {
    const auto tokens = detail::dsl_tokens(src, first_line);
    std::vector<ConceptDef> out;
    std::size_t i = 0;
    auto at_end = [&] { return i >= tokens.size(); };
    auto error = [&](const std::string& expected) {
        if (at_end()) {
            const auto line = tokens.empty() ? first_line : tokens.back().line;
            fail(Errc::parse_error, "line " + std::to_string(line) + ": expected " + expected + ", found end of input",
                 line);
        }
        const auto& t = tokens[i];
        fail(Errc::parse_error,
             "line " + std::to_string(t.line) + ", column " + std::to_string(t.column) + ": expected " + expected +
                 ", found '" + t.text + "'",
             t.line);
    };
    auto is_keyword = [&](std::string_view kw) { return !at_end() && detail::upper(tokens[i].text) == kw; };
    auto is_name = [&] {
        return !at_end() && (std::isalpha(static_cast<unsigned char>(tokens[i].text[0])) || tokens[i].text[0] == '_');
    };
    auto name = [&](const std::string& what) -> std::string {
        if (!is_name()) {
            error(what);
        }
        return tokens[i++].text;
    };
    auto section_start = [&] { return is_keyword("IDENTITY") || is_keyword("ENTITY") || is_keyword("CONCEPT"); };

    while (!at_end()) {
        if (!is_keyword("CONCEPT")) {
            error("CONCEPT");
        }
        ConceptDef def;
        def.line = tokens[i].line;
        def.column = tokens[i].column;
        ++i;
        def.name = name("concept name");
        if (is_keyword("IN")) {
            ++i;
            def.super = name("super-concept name");
        }
        std::set<std::string> sections;
        while (is_keyword("IDENTITY") || is_keyword("ENTITY")) {
            const auto kw = detail::upper(tokens[i].text);
            if (!sections.insert(kw).second) {
                error("a single " + kw + " section");
            }
            ++i;
            auto& list = kw == "IDENTITY" ? def.identity : def.entity;
            while (!at_end() && !section_start()) {
                DimensionSpec spec;
                spec.range = name("type name");
                if (detail::upper(spec.range) == "CHAR" && !at_end() && tokens[i].text == "(") {
                    ++i;
                    if (at_end() || !std::isdigit(static_cast<unsigned char>(tokens[i].text[0]))) {
                        error("CHAR length");
                    }
                    std::size_t n = 0;
                    const auto& t = tokens[i].text;
                    std::from_chars(t.data(), t.data() + t.size(), n);
                    ++i;
                    if (at_end() || tokens[i].text != ")") {
                        error("')'");
                    }
                    ++i;
                    spec.range = "String";
                    spec.char_length = n;
                }
                spec.name = name("dimension name");
                list.push_back(std::move(spec));
            }
        }
        out.push_back(std::move(def));
    }
    return out;
}

/// Registers parsed definitions. Concepts may refer to each other in any
/// order: all concepts are created first (supers before subs), then their
/// dimensions are added in file order. Error positions are the definition's
/// line.
inline void apply_schema(Schema& schema, const std::vector<ConceptDef>& defs, Checking checking = Checking::enforce) {
    auto at_line = [](const ConceptDef& d, const Error& e) -> Error {
        return Error(e.code(), e.detail(), d.line);
    };
    std::set<std::string> declared;
    for (const auto& d : defs) {
        if (!declared.insert(d.name).second || schema.find(d.name)) {
            fail(Errc::duplicate_concept, "concept '" + d.name + "' already defined", d.line);
        }
    }
    std::vector<bool> done(defs.size(), false);
    std::size_t remaining = defs.size();
    std::vector<std::size_t> relink;
    while (remaining > 0) {
        bool progress = false;
        for (std::size_t k = 0; k < defs.size(); ++k) {
            const auto& d = defs[k];
            if (done[k]) {
                continue;
            }
            const bool super_ready = d.super.empty() || d.super == d.name || schema.find(d.super).has_value();
            const bool super_pending =
                !super_ready && std::any_of(defs.begin(), defs.end(), [&](const ConceptDef& o) {
                    return o.name == d.super && !done[static_cast<std::size_t>(&o - defs.data())];
                });
            if (super_pending) {
                continue;
            }
            try {
                schema.define_concept(d.name, d.super, {}, {}, checking);
            } catch (const Error& e) {
                throw at_line(d, e);
            }
            done[k] = true;
            --remaining;
            progress = true;
        }
        if (!progress) {
            // supers loop among undefined concepts; break the loop and link it afterwards
            const auto k = static_cast<std::size_t>(std::find(done.begin(), done.end(), false) - done.begin());
            try {
                schema.define_concept(defs[k].name, "", {}, {}, checking);
            } catch (const Error& e) {
                throw at_line(defs[k], e);
            }
            relink.push_back(k);
            done[k] = true;
            --remaining;
        }
    }
    for (auto k : relink) {
        try {
            schema.reparent(schema.require(defs[k].name), schema.require(defs[k].super), checking);
        } catch (const Error& e) {
            throw at_line(defs[k], e);
        }
    }
    for (const auto& d : defs) {
        const auto id = schema.require(d.name);
        try {
            for (const auto& s : d.identity) {
                schema.add_dimension(id, DimensionKind::identity, s, checking);
            }
            for (const auto& s : d.entity) {
                schema.add_dimension(id, DimensionKind::entity, s, checking);
            }
        } catch (const Error& e) {
            throw at_line(d, e);
        }
    }
}

}  // namespace com::cli
