#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "com/cli/csv.hpp"
#include "com/cli/schema_dsl.hpp"
#include "com/error.hpp"
#include "com/expr/columns.hpp"
#include "com/expr/parser.hpp"
#include "com/setops.hpp"
#include "com/store.hpp"

namespace com::cli {

struct ScriptOptions {
    bool strict_links = false;
    bool verbose = false;
    std::uint64_t seed = 0;  // reserved for sampling tools
    std::optional<std::filesystem::path> output_dir;
    unsigned threads = 1;
};

namespace detail {

inline auto trim(std::string_view s) -> std::string_view {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline auto first_word(std::string_view s) -> std::string {
    std::size_t i = 0;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) {
        ++i;
    }
    return upper(s.substr(0, i));
}

inline auto is_statement_keyword(const std::string& w) -> bool {
    static const std::set<std::string> kw = {"CONCEPT", "LOAD",  "COLUMN", "EVALUATE", "SUBSET", "PRODUCT",
                                             "FUNCTION", "QUERY", "PRINT",  "EXPORT",   "VALIDATE"};
    return kw.contains(w);
}

/// Splits on commas outside brackets, parentheses and strings.
inline auto split_top_level(std::string_view s) -> std::vector<std::string> {
    std::vector<std::string> out;
    int depth = 0;
    bool in_string = false;
    bool in_bracket = false;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (in_bracket) {
            in_bracket = c != ']';
        } else if (c == '"') {
            in_string = true;
        } else if (c == '[') {
            in_bracket = true;
        } else if (c == '(') {
            ++depth;
        } else if (c == ')') {
            --depth;
        } else if (c == ',' && depth == 0) {
            out.emplace_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    out.emplace_back(trim(s.substr(start)));
    return out;
}

/// Position of a top-level keyword (case-insensitive, whole word) outside
/// brackets and strings, or npos.
inline auto find_keyword(std::string_view s, std::string_view kw) -> std::size_t {
    bool in_string = false;
    bool in_bracket = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (in_bracket) {
            in_bracket = c != ']';
            continue;
        }
        if (c == '"') {
            in_string = true;
            continue;
        }
        if (c == '[') {
            in_bracket = true;
            continue;
        }
        const bool boundary_before = i == 0 || !(std::isalnum(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == '_');
        if (!boundary_before || i + kw.size() > s.size() || upper(s.substr(i, kw.size())) != kw) {
            continue;
        }
        const auto after = i + kw.size();
        if (after == s.size() || !(std::isalnum(static_cast<unsigned char>(s[after])) || s[after] == '_')) {
            return i;
        }
    }
    return std::string_view::npos;
}

/// Double-quoted string literal at the start of `s`; returns the text and
/// the rest.
inline auto quoted(std::string_view s) -> std::pair<std::string, std::string_view> {
    s = trim(s);
    if (s.empty() || s.front() != '"') {
        fail(Errc::parse_error, "expected a double-quoted path");
    }
    std::string out;
    std::size_t i = 1;
    for (; i < s.size() && s[i] != '"'; ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            ++i;
        }
        out.push_back(s[i]);
    }
    if (i >= s.size()) {
        fail(Errc::parse_error, "unterminated path string");
    }
    return {out, s.substr(i + 1)};
}

inline auto expect_name(std::string_view s, std::string_view what) -> std::string {
    s = trim(s);
    static const std::regex ident(R"([A-Za-z_][A-Za-z0-9_]*)");
    std::string text(s);
    if (!std::regex_match(text, ident)) {
        fail(Errc::parse_error, "expected " + std::string(what) + ", found '" + text + "'");
    }
    return text;
}

}  // namespace detail

/// Executes a transformation script. Each statement prints one summary
/// line to `out`; the first failure is reported on `err` and stops the run.
class ScriptRunner {
public:
    ScriptRunner(std::filesystem::path script_dir, ScriptOptions options, std::ostream& out)
        : dir_(std::move(script_dir)), options_(std::move(options)), out_(out) {}

    [[nodiscard]] auto store() const -> const Store& { return store_; }

    /// Runs the whole text. Errors propagate with the script line as position.
    void run(std::string_view text) {
        std::vector<std::string> lines;
        {
            std::string cur;
            for (char c : text) {
                if (c == '\n') {
                    lines.push_back(std::move(cur));
                    cur.clear();
                } else {
                    cur.push_back(c);
                }
            }
            lines.push_back(std::move(cur));
        }
        std::size_t i = 0;
        while (i < lines.size()) {
            const auto line = detail::trim(lines[i]);
            if (line.empty() || line.starts_with("//") || line.starts_with("#")) {
                ++i;
                continue;
            }
            const auto kw = detail::first_word(line);
            const auto line_no = i + 1;
            if (kw == "CONCEPT") {
                std::string block;
                std::size_t j = i;
                for (; j < lines.size(); ++j) {
                    const auto l = detail::trim(lines[j]);
                    const auto w = detail::first_word(l);
                    if (j > i && detail::is_statement_keyword(w) && w != "CONCEPT") {
                        break;
                    }
                    block += lines[j];
                    block += "\n";
                }
                at(line_no, [&] { concepts(block, line_no); }, true);
                i = j;
                continue;
            }
            if (kw != "COLUMN") {
                at(pending_line_, [&] { flush_columns(); }, true);
            }
            at(line_no, [&] { statement(kw, line); });
            if (kw == "COLUMN") {
                pending_lines_.push_back(line_no);
                if (pending_line_ == 0) {
                    pending_line_ = line_no;
                }
            }
            ++i;
        }
        at(pending_line_, [&] { flush_columns(); }, true);
    }

private:
    /// Runs `f`, attributing engine errors to script line `line` unless the
    /// error already names a more precise one.
    template <typename F>
    void at(std::size_t line, F&& f, bool keep_position = false) {
        try {
            f();
        } catch (const Error& e) {
            throw Error(e.code(), e.detail(), keep_position ? e.position().value_or(line) : line);
        }
    }

    auto output_path(const std::string& p) const -> std::filesystem::path {
        std::filesystem::path path(p);
        if (path.is_absolute()) {
            return path;
        }
        return options_.output_dir.value_or(dir_) / path;
    }

    void concepts(const std::string& block, std::size_t first_line) {
        const auto defs = parse_schema_dsl(block, first_line);
        apply_schema(store_.schema(), defs);
        out_ << "defined " << defs.size() << (defs.size() == 1 ? " concept" : " concepts") << "\n";
    }

    void flush_columns() {
        if (pending_.empty()) {
            return;
        }
        auto batch = std::move(pending_);
        auto lines = std::move(pending_lines_);
        pending_.clear();
        pending_lines_.clear();
        pending_line_ = 0;
        try {
            catalog_.define(store_, batch);
        } catch (const Error& e) {
            // name the COLUMN statement the message refers to, if any
            std::size_t line = lines.front();
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const auto label = store_.schema().name_of(batch[k].input) + "." + batch[k].name + ":";
                if (e.detail().find(label) != std::string::npos) {
                    line = lines[k];
                    break;
                }
            }
            throw Error(e.code(), e.detail(), line);
        }
    }

    void statement(const std::string& kw, std::string_view line) {
        auto rest = detail::trim(line.substr(kw.size()));
        if (kw == "LOAD") {
            load(rest);
        } else if (kw == "COLUMN") {
            column(rest);
        } else if (kw == "EVALUATE") {
            const auto started = std::chrono::steady_clock::now();
            const auto names = catalog_.evaluate(store_, expr::EvaluateOptions{options_.strict_links, options_.threads});
            out_ << "evaluated " << names.size() << (names.size() == 1 ? " column" : " columns");
            if (options_.verbose) {
                const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started);
                out_ << " in " << ms.count() << " ms";
            }
            out_ << "\n";
        } else if (kw == "SUBSET") {
            subset_statement(rest);
        } else if (kw == "PRODUCT") {
            product_statement(rest);
        } else if (kw == "FUNCTION") {
            function_statement(rest);
        } else if (kw == "QUERY") {
            query_statement(rest);
        } else if (kw == "PRINT" || kw == "EXPORT") {
            output_statement(kw, rest);
        } else if (kw == "VALIDATE") {
            const auto report = store_.schema().validate();
            out_ << report.size() << (report.size() == 1 ? " violation" : " violations") << "\n";
            for (const auto& v : report) {
                out_ << "  " << v.concept_name << (v.dimension.empty() ? "" : "." + v.dimension) << ": " << v.message
                     << "\n";
            }
        } else {
            fail(Errc::parse_error, "unknown statement '" + std::string(detail::trim(line)) + "'");
        }
    }

    // LOAD C FROM "p" [MAP h->d, ...] [WHERE e]
    void load(std::string_view rest) {
        const auto from = detail::find_keyword(rest, "FROM");
        if (from == std::string_view::npos) {
            fail(Errc::parse_error, "LOAD needs FROM \"path\"");
        }
        CsvTableSpec spec;
        spec.target = store_.schema().require(detail::expect_name(rest.substr(0, from), "concept name"));
        auto [path, tail] = detail::quoted(rest.substr(from + 4));
        spec.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : dir_ / path;
        const auto where = detail::find_keyword(tail, "WHERE");
        if (where != std::string_view::npos) {
            spec.where = expr::parse_expression(tail.substr(where + 5));
            tail = tail.substr(0, where);
        }
        tail = detail::trim(tail);
        if (!tail.empty()) {
            if (detail::first_word(tail) != "MAP") {
                fail(Errc::parse_error, "unexpected '" + std::string(tail) + "' in LOAD");
            }
            for (const auto& item : detail::split_top_level(tail.substr(3))) {
                const auto arrow = item.find("->");
                if (arrow == std::string::npos) {
                    fail(Errc::parse_error, "MAP entries are written header->dimension");
                }
                spec.map.emplace_back(std::string(detail::trim(std::string_view(item).substr(0, arrow))),
                                      std::string(detail::trim(std::string_view(item).substr(arrow + 2))));
            }
        }
        const auto n = load_csv(store_, spec);
        out_ << "loaded " << n << (n == 1 ? " row" : " rows") << " into " << store_.schema().name_of(spec.target)
             << "\n";
    }

    // COLUMN C.name : Type = coel
    void column(std::string_view rest) {
        const auto eq = rest.find('=');
        const auto colon = rest.find(':');
        if (colon == std::string_view::npos || eq == std::string_view::npos || colon > eq) {
            fail(Errc::parse_error, "COLUMN is written Concept.name : Type = formula");
        }
        const auto target = detail::trim(rest.substr(0, colon));
        const auto dot = target.find('.');
        if (dot == std::string_view::npos) {
            fail(Errc::parse_error, "COLUMN is written Concept.name : Type = formula");
        }
        const auto& schema = store_.schema();
        const auto input = schema.require(detail::expect_name(target.substr(0, dot), "concept name"));
        const auto name = detail::expect_name(target.substr(dot + 1), "column name");
        const auto type = schema.find(detail::trim(rest.substr(colon + 1, eq - colon - 1)));
        if (!type) {
            fail(Errc::unknown_range,
                 "unknown column type '" + std::string(detail::trim(rest.substr(colon + 1, eq - colon - 1))) + "'");
        }
        auto def = expr::make_definition(name, input, *type, expr::parse_expression(rest.substr(eq + 1)));
        out_ << "column " << schema.name_of(input) << "." << name << " (" << expr::column_kind_name(def.kind)
             << ")\n";
        pending_.push_back(std::move(def));
    }

    // SUBSET N OF C WHERE e
    void subset_statement(std::string_view rest) {
        const auto of = detail::find_keyword(rest, "OF");
        const auto where = detail::find_keyword(rest, "WHERE");
        if (of == std::string_view::npos || where == std::string_view::npos || where < of) {
            fail(Errc::parse_error, "SUBSET is written SUBSET Name OF Concept WHERE predicate");
        }
        const auto name = detail::expect_name(rest.substr(0, of), "subset name");
        const auto super = store_.schema().require(detail::expect_name(rest.substr(of + 2, where - of - 2), "concept name"));
        const auto id = subset(store_, name, super, expr::parse_expression(rest.substr(where + 5)));
        out_ << "subset " << name << ": " << store_.extent_size(id) << " of " << store_.extent_size(super)
             << " elements\n";
    }

    // PRODUCT N = (C1 d1, C2 d2 [| e])
    void product_statement(std::string_view rest) {
        const auto eq = rest.find('=');
        if (eq == std::string_view::npos) {
            fail(Errc::parse_error, "PRODUCT is written PRODUCT Name = (Concept dim, ... [| condition])");
        }
        const auto name = detail::expect_name(rest.substr(0, eq), "product name");
        auto body = detail::trim(rest.substr(eq + 1));
        if (body.size() < 2 || body.front() != '(' || body.back() != ')') {
            fail(Errc::parse_error, "PRODUCT sources must be enclosed in parentheses");
        }
        body = body.substr(1, body.size() - 2);
        expr::ExprPtr where;
        if (const auto bar = body.find('|'); bar != std::string_view::npos && body.substr(bar, 2) != "||") {
            where = expr::parse_expression(body.substr(bar + 1));
            body = body.substr(0, bar);
        }
        std::vector<std::pair<std::string, ConceptId>> sources;
        for (const auto& item : detail::split_top_level(body)) {
            std::istringstream in(item);
            std::string concept_name;
            std::string dim;
            std::string extra;
            in >> concept_name >> dim >> extra;
            if (dim.empty() || !extra.empty()) {
                fail(Errc::parse_error, "PRODUCT source '" + item + "' is not 'Concept dim'");
            }
            sources.emplace_back(detail::expect_name(dim, "dimension name"), store_.schema().require(concept_name));
        }
        const auto id = product(store_, name, sources, where);
        out_ << "product " << name << ": " << store_.extent_size(id) << " elements\n";
    }

    // FUNCTION C::name = (this) <- ...
    void function_statement(std::string_view rest) {
        const auto sep = rest.find("::");
        const auto eq = rest.find('=');
        if (sep == std::string_view::npos || eq == std::string_view::npos || sep > eq) {
            fail(Errc::parse_error, "FUNCTION is written FUNCTION Concept::name = (this) steps");
        }
        const auto concept_id = store_.schema().require(detail::expect_name(rest.substr(0, sep), "concept name"));
        const auto name = detail::expect_name(rest.substr(sep + 2, eq - sep - 2), "function name");
        const auto q = parse_query(store_.schema(), rest.substr(eq + 1));
        if (q.source != expr::kThis && q.source != store_.schema().name_of(concept_id)) {
            fail(Errc::type_mismatch, "a function query starts from (this)");
        }
        register_derived_function(store_, functions_, concept_id, name, q.steps);
        out_ << "function " << store_.schema().name_of(concept_id) << "::" << name << "\n";
    }

    // QUERY <arrow text> [AS name] | QUERY C::fn(ordinal) [AS name]
    void query_statement(std::string_view rest) {
        std::string save;
        static const std::regex as_suffix(R"(^([\s\S]*\S)\s+[Aa][Ss]\s+([A-Za-z_][A-Za-z0-9_]*)\s*$)");
        std::string text(rest);
        std::smatch m;
        if (std::regex_match(text, m, as_suffix)) {
            save = m[2];
            text = m[1];
        }
        QueryResult result;
        static const std::regex call(R"(^\s*([A-Za-z_]\w*)::([A-Za-z_]\w*)\(\s*(\d+)\s*\)\s*$)");
        if (std::regex_match(text, m, call)) {
            const auto concept_id = store_.schema().require(m[1].str());
            result = functions_.call(store_, concept_id, m[2], std::stoll(m[3]));
        } else {
            const auto q = parse_query(store_.schema(), text);
            QueryPlan plan;
            if (auto it = saved_.find(q.source); it != saved_.end()) {
                plan.source = it->second;
            } else {
                plan.source = store_.schema().require(q.source);
            }
            plan.steps = q.steps;
            result = run_query(store_, plan);
        }
        if (const auto* sel = std::get_if<ElementSelection>(&result)) {
            out_ << "query: " << sel->ordinals.size() << (sel->ordinals.size() == 1 ? " element" : " elements")
                 << " of " << store_.schema().name_of(sel->concept_id);
            if (!save.empty()) {
                saved_[save] = *sel;
                out_ << " saved as " << save;
            }
            out_ << "\n";
        } else {
            const auto& list = std::get<ValueList>(result);
            out_ << "query: " << list.values.size() << (list.values.size() == 1 ? " value" : " values") << "\n";
            if (!save.empty()) {
                saved_values_[save] = list;
            }
        }
    }

    // PRINT x [COLUMNS ...] | EXPORT x [COLUMNS ...] TO "p"
    void output_statement(const std::string& kw, std::string_view rest) {
        std::optional<std::string> path;
        if (kw == "EXPORT") {
            const auto to = detail::find_keyword(rest, "TO");
            if (to == std::string_view::npos) {
                fail(Errc::parse_error, "EXPORT needs TO \"path\"");
            }
            auto [p, tail] = detail::quoted(rest.substr(to + 2));
            if (!detail::trim(tail).empty()) {
                fail(Errc::parse_error, "unexpected text after EXPORT path");
            }
            path = p;
            rest = detail::trim(rest.substr(0, to));
        }
        std::vector<std::string> columns;
        const auto cols = detail::find_keyword(rest, "COLUMNS");
        const auto name = detail::expect_name(rest.substr(0, cols), "concept or query name");
        if (cols != std::string_view::npos) {
            columns = detail::split_top_level(rest.substr(cols + 7));
        }
        std::string csv;
        std::size_t rows = 0;
        if (auto it = saved_values_.find(name); it != saved_values_.end()) {
            csv = format_csv(it->second, name);
            rows = it->second.values.size();
        } else {
            ElementSelection sel;
            if (auto s = saved_.find(name); s != saved_.end()) {
                sel = s->second;
            } else {
                sel = full_extent(store_, store_.schema().require(name));
            }
            if (columns.empty()) {
                columns = default_columns(store_.schema(), sel.concept_id);
            }
            csv = format_csv(store_, sel, columns);
            rows = sel.ordinals.size();
        }
        if (path) {
            const auto target = output_path(*path);
            write_file(target, csv);
            out_ << "exported " << rows << (rows == 1 ? " row" : " rows") << " to " << *path << "\n";
        } else {
            out_ << csv;
        }
    }

    std::filesystem::path dir_;
    ScriptOptions options_;
    std::ostream& out_;
    Store store_;
    expr::ColumnCatalog catalog_;
    FunctionRegistry functions_;
    std::map<std::string, ElementSelection> saved_;
    std::map<std::string, ValueList> saved_values_;
    std::vector<expr::ColumnDefinition> pending_;
    std::vector<std::size_t> pending_lines_;
    std::size_t pending_line_ = 0;
};

/// Runs a script file; returns the process exit code (0 ok, 1 engine error,
/// 2 internal error). Diagnostics go to `err` as "file:line: error: Kind: message".
inline auto run_script(const std::filesystem::path& path, const ScriptOptions& options, std::ostream& out,
                       std::ostream& err) -> int {
    std::size_t line = 0;
    try {
        const auto text = read_file(path);
        ScriptRunner runner(path.has_parent_path() ? path.parent_path() : std::filesystem::path("."), options, out);
        runner.run(text);
        return 0;
    } catch (const Error& e) {
        line = e.position().value_or(0);
        err << path.string() << ":" << line << ": error: " << errc_name(e.code()) << ": " << e.detail() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << path.string() << ": internal error: " << e.what() << "\n";
        return 2;
    }
}

/// Parses a schema file and reports its structural violations; returns the
/// exit code.
inline auto validate_schema_file(const std::filesystem::path& path, std::ostream& out, std::ostream& err) -> int {
    try {
        const auto defs = parse_schema_dsl(read_file(path));
        Schema schema;
        apply_schema(schema, defs, Checking::defer);
        const auto report = schema.validate();
        out << report.size() << (report.size() == 1 ? " violation" : " violations") << "\n";
        for (const auto& v : report) {
            out << "  " << v.concept_name << (v.dimension.empty() ? "" : "." + v.dimension) << ": " << v.message << "\n";
        }
        return report.empty() ? 0 : 1;
    } catch (const Error& e) {
        err << path.string() << ":" << e.position().value_or(0) << ": error: " << errc_name(e.code()) << ": "
            << e.detail() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << path.string() << ": internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace com::cli
