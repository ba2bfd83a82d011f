#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "com/error.hpp"
#include "com/expr/eval.hpp"
#include "com/expr/parser.hpp"
#include "com/schema.hpp"
#include "com/store.hpp"

namespace com {

/// Elements of one concept, ascending and duplicate-free.
struct ElementSelection {
    ConceptId concept_id;
    std::vector<Ordinal> ordinals;
    friend auto operator==(const ElementSelection&, const ElementSelection&) -> bool = default;
};

/// Distinct primitive values, ascending.
struct ValueList {
    ConceptId type;
    std::vector<Value> values;
    friend auto operator==(const ValueList&, const ValueList&) -> bool = default;
};

using QueryResult = std::variant<ElementSelection, ValueList>;

/// A dimension path such as [address].[city]; empty means "the single
/// dimension connecting the two concepts".
using DimensionPath = std::vector<std::string>;

struct ProjectStep {
    DimensionPath path;
    std::optional<ConceptId> target;
};

struct DeprojectStep {
    ConceptId source;
    DimensionPath path;
};

struct FilterStep {
    expr::ExprPtr predicate;
};

using QueryStep = std::variant<ProjectStep, DeprojectStep, FilterStep>;

struct QueryPlan {
    std::variant<ConceptId, ElementSelection> source;
    std::vector<QueryStep> steps;
};

inline auto full_extent(const Store& store, ConceptId concept_id) -> ElementSelection {
    ElementSelection sel{concept_id, std::vector<Ordinal>(store.extent_size(concept_id))};
    std::iota(sel.ordinals.begin(), sel.ordinals.end(), Ordinal{0});
    return sel;
}

inline auto path_text(const DimensionPath& path) -> std::string {
    std::string out;
    for (const auto& d : path) {
        out += (out.empty() ? "[" : ".[") + d + "]";
    }
    return out;
}

/// Every dimension visible on `concept` (own, inherited and super), with
/// its range.
inline auto visible_dimensions(const Schema& schema, ConceptId concept_id)
    -> std::vector<std::pair<std::string, ConceptId>> {
    std::vector<std::pair<std::string, ConceptId>> out;
    std::set<std::string> seen;
    if (auto s = schema.concept_at(concept_id).super; s && *s != Schema::kRoot) {
        out.emplace_back(std::string(kSuperDimension), *s);
        seen.insert(std::string(kSuperDimension));
    }
    for (auto id : schema.super_chain(concept_id)) {
        const auto& c = schema.concept_at(id);
        for (const auto* list : {&c.identity, &c.entity}) {
            for (const auto& d : *list) {
                if (seen.insert(d.name).second) {
                    out.emplace_back(d.name, d.range);
                }
            }
        }
    }
    return out;
}

/// The single dimension of `from` whose range is `to`.
inline auto connecting_dimension(const Schema& schema, ConceptId from, ConceptId to) -> std::string {
    std::vector<std::string> hits;
    for (const auto& [name, range] : visible_dimensions(schema, from)) {
        if (range == to) {
            hits.push_back(name);
        }
    }
    if (hits.empty()) {
        fail(Errc::unknown_dimension,
             "no dimension of '" + schema.name_of(from) + "' leads to '" + schema.name_of(to) + "'");
    }
    if (hits.size() > 1) {
        std::string list;
        for (const auto& h : hits) {
            list += (list.empty() ? "" : ", ") + h;
        }
        fail(Errc::ambiguous_dimension, "'" + schema.name_of(from) + "' reaches '" + schema.name_of(to) +
                                            "' through several dimensions: " + list);
    }
    return hits.front();
}

/// Range reached by following `path` from `concept`.
inline auto path_range(const Schema& schema, ConceptId concept_id, const DimensionPath& path) -> ConceptId {
    ConceptId cur = concept_id;
    for (const auto& d : path) {
        if (!schema.is_user(cur)) {
            fail(Errc::type_mismatch, "cannot follow [" + d + "] from " + schema.name_of(cur));
        }
        cur = schema.resolve_dimension(cur, d).second.range;
    }
    return cur;
}

/// Outputs of `path` for each of `rows` of `concept`; -1 where empty.
/// Only for paths ending at a concept.
inline auto follow(const Store& store, ConceptId concept_id, std::vector<Ordinal> rows, const DimensionPath& path)
    -> std::vector<Ordinal> {
    ConceptId cur = concept_id;
    for (const auto& d : path) {
        const auto v = store.gather(cur, rows, d);
        cur = v.type();
        for (std::size_t k = 0; k < rows.size(); ++k) {
            rows[k] = v.valid(k) ? v.ints()[k] : -1;
        }
    }
    return rows;
}

/// Distinct outputs of `path` over the selection; empty outputs are dropped.
inline auto project(const Store& store, const ElementSelection& sel, const DimensionPath& path) -> QueryResult {
    const auto& schema = store.schema();
    const auto range = path_range(schema, sel.concept_id, path);
    if (path.empty()) {
        return sel;
    }
    if (schema.is_user(range)) {
        auto out = follow(store, sel.concept_id, sel.ordinals, path);
        std::erase(out, Ordinal{-1});
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return ElementSelection{range, std::move(out)};
    }
    DimensionPath prefix(path.begin(), path.end() - 1);
    const auto at = follow(store, sel.concept_id, sel.ordinals, prefix);
    const auto owner = path_range(schema, sel.concept_id, prefix);
    const auto values = store.gather(owner, at, path.back());
    std::set<Value, ValueLess> distinct;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (values.valid(k)) {
            distinct.insert(values.get(k));
        }
    }
    return ValueList{range, std::vector<Value>(distinct.begin(), distinct.end())};
}

/// All elements of `source` whose `path` output lies in the selection.
inline auto deproject(const Store& store, const ElementSelection& sel, ConceptId source, const DimensionPath& path)
    -> ElementSelection {
    const auto& schema = store.schema();
    const auto range = path_range(schema, source, path);
    if (range != sel.concept_id) {
        fail(Errc::type_mismatch, path_text(path) + " of '" + schema.name_of(source) + "' ranges over '" +
                                      schema.name_of(range) + "', not '" + schema.name_of(sel.concept_id) + "'");
    }
    std::vector<std::uint8_t> member(store.extent_size(sel.concept_id), 0);
    for (auto o : sel.ordinals) {
        member[static_cast<std::size_t>(o)] = 1;
    }
    const auto all = full_extent(store, source);
    const auto out = follow(store, source, all.ordinals, path);
    ElementSelection result{source, {}};
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (out[k] >= 0 && member[static_cast<std::size_t>(out[k])]) {
            result.ordinals.push_back(static_cast<Ordinal>(k));
        }
    }
    return result;
}

inline auto filter(const Store& store, const ElementSelection& sel, const expr::ExprPtr& predicate)
    -> ElementSelection {
    const expr::EvalContext ctx{store, sel.concept_id, sel.ordinals, {}};
    const auto keep = expr::evaluate_predicate(ctx, predicate);
    ElementSelection out{sel.concept_id, {}};
    for (std::size_t k = 0; k < keep.size(); ++k) {
        if (keep[k]) {
            out.ordinals.push_back(sel.ordinals[k]);
        }
    }
    return out;
}

namespace detail {

inline auto resolved_project_path(const Schema& schema, ConceptId from, const ProjectStep& step) -> DimensionPath {
    if (!step.path.empty()) {
        return step.path;
    }
    if (!step.target) {
        fail(Errc::invalid_argument, "projection needs a dimension or a target concept");
    }
    return {connecting_dimension(schema, from, *step.target)};
}

inline auto resolved_deproject_path(const Schema& schema, ConceptId to, const DeprojectStep& step) -> DimensionPath {
    if (!step.path.empty()) {
        return step.path;
    }
    return {connecting_dimension(schema, step.source, to)};
}

}  // namespace detail

/// Type-checks a plan and returns the type of its result.
inline auto check_plan(const Schema& schema, ConceptId source, const std::vector<QueryStep>& steps) -> ConceptId {
    ConceptId cur = source;
    for (const auto& step : steps) {
        if (!schema.is_user(cur)) {
            fail(Errc::type_mismatch, "no further steps possible after reaching " + schema.name_of(cur));
        }
        if (const auto* p = std::get_if<ProjectStep>(&step)) {
            const auto range = path_range(schema, cur, detail::resolved_project_path(schema, cur, *p));
            if (p->target && *p->target != range) {
                fail(Errc::type_mismatch, path_text(p->path) + " from '" + schema.name_of(cur) + "' leads to '" +
                                              schema.name_of(range) + "', not '" + schema.name_of(*p->target) + "'");
            }
            cur = range;
        } else if (const auto* d = std::get_if<DeprojectStep>(&step)) {
            const auto path = detail::resolved_deproject_path(schema, cur, *d);
            const auto range = path_range(schema, d->source, path);
            if (range != cur) {
                fail(Errc::type_mismatch, path_text(path) + " of '" + schema.name_of(d->source) + "' ranges over '" +
                                              schema.name_of(range) + "', not '" + schema.name_of(cur) + "'");
            }
            cur = d->source;
        } else {
            const auto t = expr::infer_type(schema, expr::Scope{cur, {}}, std::get<FilterStep>(step).predicate);
            if (t != Schema::kBoolean && t != Schema::kRoot) {
                fail(Errc::type_mismatch, "filter must be Boolean");
            }
        }
    }
    return cur;
}

/// Folds the steps left to right over the source selection.
inline auto run_query(const Store& store, const QueryPlan& plan) -> QueryResult {
    const auto& schema = store.schema();
    QueryResult cur = std::holds_alternative<ConceptId>(plan.source)
                          ? QueryResult{full_extent(store, std::get<ConceptId>(plan.source))}
                          : QueryResult{std::get<ElementSelection>(plan.source)};
    for (const auto& step : plan.steps) {
        const auto* sel = std::get_if<ElementSelection>(&cur);
        if (sel == nullptr) {
            fail(Errc::type_mismatch, "no further steps possible after a primitive projection");
        }
        if (const auto* p = std::get_if<ProjectStep>(&step)) {
            const auto path = detail::resolved_project_path(schema, sel->concept_id, *p);
            if (p->target && path_range(schema, sel->concept_id, path) != *p->target) {
                check_plan(schema, sel->concept_id, {step});
            }
            cur = project(store, *sel, path);
        } else if (const auto* d = std::get_if<DeprojectStep>(&step)) {
            cur = deproject(store, *sel, d->source, detail::resolved_deproject_path(schema, sel->concept_id, *d));
        } else {
            cur = filter(store, *sel, std::get<FilterStep>(step).predicate);
        }
    }
    return cur;
}

/// Product of source concepts: a new concept with one identity dimension per
/// source, populated with every combination passing `where`. The where
/// clause names sources by their dimension names.
inline auto product(Store& store, std::string_view name,
                    const std::vector<std::pair<std::string, ConceptId>>& sources,
                    const expr::ExprPtr& where = nullptr) -> ConceptId {
    if (sources.empty()) {
        fail(Errc::invalid_argument, "product '" + std::string(name) + "' needs at least one source");
    }
    auto& schema = store.schema();
    if (schema.find(name)) {
        fail(Errc::duplicate_concept, "concept '" + std::string(name) + "' already defined");
    }
    expr::Scope scope;
    std::vector<DimensionSpec> dims;
    for (const auto& [dim, concept_id] : sources) {
        if (!schema.is_user(concept_id)) {
            fail(Errc::type_mismatch, "product source '" + schema.name_of(concept_id) + "' has no extent");
        }
        scope.bindings.emplace(dim, concept_id);
        dims.push_back(DimensionSpec{dim, schema.name_of(concept_id), {}});
    }
    if (where) {
        const auto t = expr::infer_type(schema, scope, where);
        if (t != Schema::kBoolean && t != Schema::kRoot) {
            fail(Errc::type_mismatch, "product condition must be Boolean");
        }
    }
    const auto id = schema.define_concept(name, "", dims, {});
    store.create_set(id);

    std::vector<std::size_t> sizes;
    std::size_t total = 1;
    for (const auto& s : sources) {
        sizes.push_back(store.extent_size(s.second));
        total *= sizes.back();
    }
    if (total == 0) {
        return id;
    }
    constexpr std::size_t kChunk = 4096;
    std::vector<std::size_t> digit(sources.size(), 0);
    for (std::size_t begin = 0; begin < total; begin += kChunk) {
        const auto n = std::min(kChunk, total - begin);
        std::vector<Vector> columns;
        for (const auto& s : sources) {
            columns.emplace_back(s.second, n);
        }
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t j = 0; j < sources.size(); ++j) {
                columns[j].ints()[k] = static_cast<Ordinal>(digit[j]);
                columns[j].mask()[k] = 1;
            }
            for (std::size_t j = sources.size(); j-- > 0;) {
                if (++digit[j] < sizes[j]) {
                    break;
                }
                digit[j] = 0;
            }
        }
        std::vector<std::uint8_t> keep(n, 1);
        if (where) {
            expr::EvalContext ctx{store, std::nullopt, {}, {}};
            for (std::size_t j = 0; j < sources.size(); ++j) {
                ctx.bindings.emplace(sources[j].first, columns[j]);
            }
            keep = expr::evaluate_predicate(ctx, where);
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (!keep[k]) {
                continue;
            }
            std::vector<Value> identity;
            for (const auto& c : columns) {
                identity.push_back(Value::integer(c.ints()[k]));
            }
            store.append_under(id, -1, std::move(identity));
        }
    }
    return id;
}

/// Subset of `super`: a concept without own dimensions holding one element
/// per super element satisfying `predicate`.
inline auto subset(Store& store, std::string_view name, ConceptId super, const expr::ExprPtr& predicate)
    -> ConceptId {
    auto& schema = store.schema();
    if (schema.find(name)) {
        fail(Errc::duplicate_concept, "concept '" + std::string(name) + "' already defined");
    }
    if (!schema.is_user(super)) {
        fail(Errc::invalid_super, "subset '" + std::string(name) + "' needs a concept with an extent");
    }
    const auto t = expr::infer_type(schema, expr::Scope{super, {}}, predicate);
    if (t != Schema::kBoolean && t != Schema::kRoot) {
        fail(Errc::type_mismatch, "subset condition must be Boolean");
    }
    store.create_set(super);
    const auto keep = expr::evaluate_predicate(expr::EvalContext::over_extent(store, super), predicate);
    const auto id = schema.define_concept(name, schema.name_of(super), {}, {});
    store.create_set(id);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        if (keep[k]) {
            store.append_under(id, static_cast<Ordinal>(k), {});
        }
    }
    return id;
}

/// Set-valued functions defined by a query from `this`.
class FunctionRegistry {
public:
    void register_function(const Schema& schema, ConceptId concept_id, const std::string& name,
                           std::vector<QueryStep> steps) {
        if (schema.try_resolve_dimension(concept_id, name) || functions_.contains({concept_id, name})) {
            fail(Errc::duplicate_dimension, "'" + schema.name_of(concept_id) + "' already has '" + name + "'");
        }
        check_plan(schema, concept_id, steps);
        functions_.emplace(std::pair{concept_id, name}, std::move(steps));
    }

    [[nodiscard]] auto contains(ConceptId concept_id, const std::string& name) const -> bool {
        return functions_.contains({concept_id, name});
    }

    [[nodiscard]] auto call(const Store& store, ConceptId concept_id, const std::string& name, Ordinal element) const
        -> QueryResult {
        auto it = functions_.find({concept_id, name});
        if (it == functions_.end()) {
            fail(Errc::unknown_dimension, "'" + store.schema().name_of(concept_id) + "' has no function '" + name + "'");
        }
        if (element < 0 || static_cast<std::size_t>(element) >= store.extent_size(concept_id)) {
            fail(Errc::ordinal_out_of_range, "no element " + std::to_string(element) + " in '" +
                                                 store.schema().name_of(concept_id) + "'");
        }
        return run_query(store, QueryPlan{ElementSelection{concept_id, {element}}, it->second});
    }

private:
    std::map<std::pair<ConceptId, std::string>, std::vector<QueryStep>> functions_;
};

inline void register_derived_function(const Store& store, FunctionRegistry& registry, ConceptId concept_id,
                                      const std::string& name, std::vector<QueryStep> steps) {
    registry.register_function(store.schema(), concept_id, name, std::move(steps));
}

/// Arrow-notation text: "(Source [| expr]) (-> [path] -> (C) | <- [path] <- (C))*".
/// The source is returned by name; a filter inside a node applies after the
/// step that reaches it.
struct ParsedQuery {
    std::string source;
    std::vector<QueryStep> steps;
};

namespace detail {

class QueryScanner {
public:
    QueryScanner(const Schema& schema, std::string_view text) : schema_(schema), text_(text) {}

    auto parse() -> ParsedQuery {
        ParsedQuery out;
        auto [name, filter] = node();
        out.source = name;
        if (filter) {
            out.steps.emplace_back(FilterStep{filter});
        }
        skip_space();
        while (pos_ < text_.size()) {
            const bool forward = take("->");
            if (!forward && !take("<-")) {
                error("'->' or '<-'");
            }
            DimensionPath path;
            skip_space();
            if (peek() == '[') {
                path = dimension_path();
                if (!take(forward ? "->" : "<-")) {
                    error(forward ? "'->'" : "'<-'");
                }
            }
            auto [target, pred] = node();
            const auto concept_id = schema_.require(target);
            if (forward) {
                out.steps.emplace_back(ProjectStep{std::move(path), concept_id});
            } else {
                out.steps.emplace_back(DeprojectStep{concept_id, std::move(path)});
            }
            if (pred) {
                out.steps.emplace_back(FilterStep{pred});
            }
            skip_space();
        }
        return out;
    }

private:
    [[nodiscard]] auto peek() const -> char { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    auto take(std::string_view s) -> bool {
        skip_space();
        if (text_.substr(pos_, s.size()) == s) {
            pos_ += s.size();
            return true;
        }
        return false;
    }

    [[noreturn]] void error(std::string_view expected) const {
        fail(Errc::parse_error, "expected " + std::string(expected) + " at " + std::to_string(pos_) + " in query",
             pos_);
    }

    auto dimension_path() -> DimensionPath {
        DimensionPath out;
        do {
            skip_space();
            if (peek() != '[') {
                error("'['");
            }
            const auto close = text_.find(']', pos_);
            if (close == std::string_view::npos) {
                error("']'");
            }
            out.emplace_back(text_.substr(pos_ + 1, close - pos_ - 1));
            pos_ = close + 1;
        } while (take("."));
        return out;
    }

    auto node() -> std::pair<std::string, expr::ExprPtr> {
        if (!take("(")) {
            error("'('");
        }
        skip_space();
        const auto start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        if (pos_ == start) {
            error("concept name");
        }
        std::string name(text_.substr(start, pos_ - start));
        expr::ExprPtr pred;
        if (take("|")) {
            const auto begin = pos_;
            int depth = 0;
            bool in_string = false;
            bool in_bracket = false;
            for (; pos_ < text_.size(); ++pos_) {
                const char c = text_[pos_];
                if (in_string) {
                    if (c == '\\') {
                        ++pos_;
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
                    if (depth == 0) {
                        break;
                    }
                    --depth;
                }
            }
            pred = expr::parse_expression(text_.substr(begin, pos_ - begin));
        }
        if (!take(")")) {
            error("')'");
        }
        return {std::move(name), std::move(pred)};
    }

    const Schema& schema_;
    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline auto parse_query(const Schema& schema, std::string_view text) -> ParsedQuery {
    return detail::QueryScanner(schema, text).parse();
}

}  // namespace com
