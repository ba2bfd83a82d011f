#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "com/error.hpp"
#include "com/expr/eval.hpp"
#include "com/expr/parser.hpp"
#include "com/setops.hpp"
#include "com/store.hpp"

namespace com::cli {

struct CsvField {
    std::string text;
    bool quoted = false;
};

using CsvRow = std::vector<CsvField>;

/// RFC 4180 records; accepts \n, \r\n and \r line ends. A blank last line is
/// not a record.
inline auto parse_csv(std::string_view src) -> std::vector<CsvRow> {
    std::vector<CsvRow> rows;
    CsvRow row;
    CsvField field;
    bool row_started = false;
    std::size_t i = 0;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field = CsvField{};
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_started = false;
    };
    while (i < src.size()) {
        const char c = src[i];
        if (c == '"' && field.text.empty() && !field.quoted) {
            field.quoted = true;
            row_started = true;
            ++i;
            bool closed = false;
            while (i < src.size()) {
                if (src[i] == '"') {
                    if (i + 1 < src.size() && src[i + 1] == '"') {
                        field.text.push_back('"');
                        i += 2;
                        continue;
                    }
                    closed = true;
                    ++i;
                    break;
                }
                field.text.push_back(src[i++]);
            }
            if (!closed) {
                fail(Errc::csv_format_error, "row " + std::to_string(rows.size() + 1) + ": unterminated quoted field",
                     rows.size() + 1);
            }
            if (i < src.size() && src[i] != ',' && src[i] != '\n' && src[i] != '\r') {
                fail(Errc::csv_format_error,
                     "row " + std::to_string(rows.size() + 1) + ": text after closing quote", rows.size() + 1);
            }
            continue;
        }
        if (c == ',') {
            row_started = true;
            end_field();
            ++i;
            continue;
        }
        if (c == '\n' || c == '\r') {
            i += (c == '\r' && i + 1 < src.size() && src[i + 1] == '\n') ? 2 : 1;
            end_row();
            continue;
        }
        row_started = true;
        field.text.push_back(c);
        ++i;
    }
    if (row_started) {
        end_row();
    }
    return rows;
}

inline auto read_file(const std::filesystem::path& path) -> std::string {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Errc::io_error, "cannot read '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(Errc::io_error, "cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        fail(Errc::io_error, "write to '" + path.string() + "' failed");
    }
}

/// Converts one CSV cell to a value of `type`. An unquoted empty field is
/// empty; a quoted one is the empty string for String and empty otherwise.
inline auto parse_cell(const CsvField& f, ConceptId type) -> std::optional<Value> {
    if (f.text.empty()) {
        if (f.quoted && type == Schema::kString) {
            return Value::text("");
        }
        return Value{};
    }
    const auto* first = f.text.data();
    const auto* last = f.text.data() + f.text.size();
    if (type == Schema::kString) {
        return Value::text(f.text);
    }
    if (type == Schema::kDouble) {
        double d = 0;
        auto r = std::from_chars(first, last, d);
        if (r.ec != std::errc{} || r.ptr != last) {
            return std::nullopt;
        }
        return Value::real(d);
    }
    if (type == Schema::kBoolean) {
        std::string t = f.text;
        std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (t == "true" || t == "1") {
            return Value::boolean(true);
        }
        if (t == "false" || t == "0") {
            return Value::boolean(false);
        }
        return std::nullopt;
    }
    // Integer, or an element ordinal for concept-valued dimensions
    std::int64_t n = 0;
    auto r = std::from_chars(first, last, n);
    if (r.ec != std::errc{} || r.ptr != last) {
        return std::nullopt;
    }
    return Value::integer(n);
}

struct CsvTableSpec {
    std::filesystem::path path;
    ConceptId target;
    /// CSV header -> dimension name; headers not listed map to a dimension
    /// of the same name when there is one and are ignored otherwise.
    std::vector<std::pair<std::string, std::string>> map;
    expr::ExprPtr where;
};

namespace detail {

struct Target {
    std::string dim;
    ConceptId range;
    bool identity;
};

/// Identity dimensions of the whole user chain, then writable entity
/// dimensions, nearest declaration first.
inline auto load_targets(const Store& store, ConceptId concept_id) -> std::vector<Target> {
    const auto& schema = store.schema();
    std::vector<Target> out;
    std::set<std::string> seen;
    for (auto id : schema.super_chain(concept_id)) {
        if (!schema.is_user(id)) {
            break;
        }
        for (const auto& d : schema.concept_at(id).identity) {
            if (seen.insert(d.name).second) {
                out.push_back(Target{d.name, d.range, true});
            }
        }
    }
    for (auto id : schema.super_chain(concept_id)) {
        if (!schema.is_user(id)) {
            break;
        }
        for (const auto& d : schema.concept_at(id).entity) {
            const auto state = store.column_state(id, d.name);
            const bool derived = state == ColumnState::derived_valid || state == ColumnState::derived_stale;
            if (!derived && seen.insert(d.name).second) {
                out.push_back(Target{d.name, d.range, false});
            }
        }
    }
    return out;
}

}  // namespace detail

/// Appends the rows of a CSV file to the target extent and returns how many
/// were appended. Row numbers in errors count the header as row 1.
inline auto load_csv_text(Store& store, std::string_view text, const CsvTableSpec& spec) -> std::size_t {
    const auto& schema = store.schema();
    store.create_set(spec.target);
    const auto rows = parse_csv(text);
    if (rows.empty()) {
        fail(Errc::csv_format_error, "row 1: missing header", 1);
    }
    const auto targets = detail::load_targets(store, spec.target);
    auto find_target = [&](std::string_view dim) -> const detail::Target* {
        auto it = std::find_if(targets.begin(), targets.end(), [&](const auto& t) { return t.dim == dim; });
        return it == targets.end() ? nullptr : &*it;
    };
    for (const auto& [header, dim] : spec.map) {
        if (find_target(dim) == nullptr) {
            fail(Errc::unknown_dimension, "'" + schema.name_of(spec.target) + "' has no loadable dimension '" + dim + "'");
        }
        if (std::none_of(rows[0].begin(), rows[0].end(), [&](const CsvField& f) { return f.text == header; })) {
            fail(Errc::csv_format_error, "row 1: no column '" + header + "'", 1);
        }
    }
    // column index -> target
    std::vector<std::pair<std::size_t, const detail::Target*>> columns;
    std::set<std::string> mapped;
    for (std::size_t c = 0; c < rows[0].size(); ++c) {
        const auto& header = rows[0][c].text;
        std::string dim = header;
        // exported headers name columns as "[dim]"
        if (dim.size() > 2 && dim.front() == '[' && dim.back() == ']' && dim.find_first_of("[]", 1) == dim.size() - 1) {
            dim = dim.substr(1, dim.size() - 2);
        }
        if (auto it = std::find_if(spec.map.begin(), spec.map.end(), [&](const auto& m) { return m.first == header; });
            it != spec.map.end()) {
            dim = it->second;
        }
        const auto* t = find_target(dim);
        if (t == nullptr) {
            continue;
        }
        if (!mapped.insert(dim).second) {
            fail(Errc::csv_format_error, "row 1: dimension '" + dim + "' mapped twice", 1);
        }
        columns.emplace_back(c, t);
    }
    for (const auto& t : targets) {
        if (t.identity && !mapped.contains(t.dim)) {
            fail(Errc::missing_identity_field, "'" + schema.name_of(spec.target) + "' needs identity column '" + t.dim + "'");
        }
    }

    const std::size_t n = rows.size() - 1;
    std::vector<Vector> staged;
    for (const auto& [c, t] : columns) {
        staged.emplace_back(t->range, n);
    }
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = rows[r + 1];
        const auto line = r + 2;
        if (row.size() != rows[0].size()) {
            fail(Errc::csv_format_error,
                 "row " + std::to_string(line) + ": expected " + std::to_string(rows[0].size()) + " fields, found " +
                     std::to_string(row.size()),
                 line);
        }
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const auto& [c, t] = columns[k];
            auto v = parse_cell(row[c], t->range);
            if (!v) {
                fail(Errc::range_mismatch,
                     "row " + std::to_string(line) + ", column '" + rows[0][c].text + "': '" + row[c].text +
                         "' is not a valid " + schema.name_of(t->range),
                     line);
            }
            staged[k].set(r, *v);
        }
    }

    std::vector<std::uint8_t> keep(n, 1);
    if (spec.where) {
        expr::EvalContext ctx{store, std::nullopt, {}, {}};
        for (std::size_t k = 0; k < columns.size(); ++k) {
            ctx.bindings.emplace(columns[k].second->dim, staged[k]);
        }
        if (n > 0) {
            keep = expr::evaluate_predicate(ctx, spec.where);
        } else {
            expr::infer_type(schema, ctx.scope(), spec.where);
        }
    }

    std::size_t appended = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (!keep[r]) {
            continue;
        }
        const auto line = r + 2;
        std::vector<Member> identity;
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (columns[k].second->identity) {
                identity.push_back(Member{columns[k].second->dim, staged[k].get(r)});
            }
        }
        try {
            const auto ordinal = store.append_element(spec.target, make_tuple(Value{}, std::move(identity)));
            for (std::size_t k = 0; k < columns.size(); ++k) {
                if (!columns[k].second->identity && staged[k].valid(r)) {
                    store.write_value(spec.target, ordinal, columns[k].second->dim, staged[k].get(r));
                }
            }
        } catch (const Error& e) {
            fail(e.code(), "row " + std::to_string(line) + ": " + e.detail(), line);
        }
        ++appended;
    }
    return appended;
}

inline auto load_csv(Store& store, const CsvTableSpec& spec) -> std::size_t {
    return load_csv_text(store, read_file(spec.path), spec);
}

inline auto csv_escape(std::string_view s) -> std::string {
    if (s.empty()) {
        return "\"\"";
    }
    if (s.find_first_of(",\"\r\n") == std::string_view::npos && s.front() != ' ' && s.back() != ' ') {
        return std::string(s);
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    return out + "\"";
}

inline auto csv_cell(const Value& v) -> std::string {
    switch (v.kind()) {
    case ValueKind::empty: return "";
    case ValueKind::integer: return std::to_string(v.as_integer());
    case ValueKind::real: return format_real(v.as_real());
    case ValueKind::boolean: return v.as_boolean() ? "true" : "false";
    case ValueKind::text: return csv_escape(v.as_text());
    default: return csv_escape(to_string(v));
    }
}

/// Default export columns: every visible dimension of the concept.
inline auto default_columns(const Schema& schema, ConceptId concept_id) -> std::vector<std::string> {
    std::vector<std::string> out;
    for (const auto& [name, range] : visible_dimensions(schema, concept_id)) {
        out.push_back("[" + name + "]");
    }
    return out;
}

/// CSV text for the selection: a header of the column expressions as given,
/// then one row per element in ascending order.
inline auto format_csv(const Store& store, const ElementSelection& sel, const std::vector<std::string>& columns)
    -> std::string {
    std::vector<Vector> values;
    const expr::EvalContext ctx{store, sel.concept_id, sel.ordinals, {}};
    for (const auto& c : columns) {
        values.push_back(expr::evaluate(ctx, expr::parse_expression(c)));
    }
    std::string out;
    for (std::size_t k = 0; k < columns.size(); ++k) {
        out += (k ? "," : "") + csv_escape(columns[k]);
    }
    out += "\n";
    for (std::size_t r = 0; r < sel.ordinals.size(); ++r) {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            out += (k ? "," : "") + csv_cell(values[k].get(r));
        }
        out += "\n";
    }
    return out;
}

/// Value list as a one-column CSV.
inline auto format_csv(const ValueList& list, std::string_view header) -> std::string {
    std::string out = csv_escape(header) + "\n";
    for (const auto& v : list.values) {
        out += csv_cell(v) + "\n";
    }
    return out;
}

inline void export_csv(const Store& store, const ElementSelection& sel, const std::vector<std::string>& columns,
                       const std::filesystem::path& path) {
    write_file(path, format_csv(store, sel, columns));
}

}  // namespace com::cli
