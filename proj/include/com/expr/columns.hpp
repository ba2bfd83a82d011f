#pragma once

#include <algorithm>
#include <exception>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "com/error.hpp"
#include "com/expr/ast.hpp"
#include "com/expr/eval.hpp"
#include "com/expr/parser.hpp"
#include "com/store.hpp"

namespace com::expr {

enum class ColumnKind { calculated, link, accumulation, constraint };

inline auto column_kind_name(ColumnKind k) -> std::string_view {
    switch (k) {
    case ColumnKind::calculated: return "calculated";
    case ColumnKind::link: return "link";
    case ColumnKind::accumulation: return "accumulation";
    case ColumnKind::constraint: return "constraint";
    }
    return "?";
}

struct ColumnDefinition {
    std::string name;
    ConceptId input;
    ConceptId output;
    ColumnKind kind = ColumnKind::calculated;
    ExprPtr formula;
    std::set<ColumnKey> dependencies;
};

/// Definition with the kind taken from the formula's root.
inline auto make_definition(std::string name, ConceptId input, ConceptId output, ExprPtr formula)
    -> ColumnDefinition {
    ColumnKind kind = ColumnKind::calculated;
    if (std::holds_alternative<TupleCtor>(formula->node)) {
        kind = ColumnKind::link;
    } else if (std::holds_alternative<AccuCtor>(formula->node)) {
        kind = ColumnKind::accumulation;
    }
    return ColumnDefinition{std::move(name), input, output, kind, std::move(formula), {}};
}

struct Analysis {
    /// Indices into the definition list, dependencies first.
    std::vector<std::size_t> order;
    /// Definitions grouped by dependency depth; a level only depends on
    /// earlier levels.
    std::vector<std::vector<std::size_t>> levels;
    std::vector<std::set<ColumnKey>> dependencies;
};

namespace detail {

inline void collect_refs(const Schema& schema, const Scope& scope, const ExprPtr& e, std::set<ColumnKey>& out) {
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, ColumnRef>) {
                if (scope.bindings.contains(x.name) || x.name == kThis || !scope.concept_id) {
                    return;
                }
                if (auto found = schema.try_resolve_dimension(*scope.concept_id, x.name)) {
                    out.insert(ColumnKey{found->first, x.name});
                }
            } else if constexpr (std::is_same_v<T, Path>) {
                collect_refs(schema, scope, x.head, out);
                const auto head = infer_type(schema, scope, x.head);
                if (schema.is_user(head)) {
                    if (auto found = schema.try_resolve_dimension(head, x.dimension)) {
                        out.insert(ColumnKey{found->first, x.dimension});
                    }
                }
            } else if constexpr (std::is_same_v<T, Binary>) {
                collect_refs(schema, scope, x.lhs, out);
                collect_refs(schema, scope, x.rhs, out);
            } else if constexpr (std::is_same_v<T, Unary>) {
                collect_refs(schema, scope, x.arg, out);
            } else if constexpr (std::is_same_v<T, Call>) {
                for (const auto& a : x.args) {
                    collect_refs(schema, scope, a, out);
                }
            } else if constexpr (std::is_same_v<T, TupleCtor>) {
                for (const auto& f : x.fields) {
                    collect_refs(schema, scope, f.second, out);
                }
            } else if constexpr (std::is_same_v<T, AccuCtor>) {
                const auto fact = schema.require(x.fact_table);
                const Scope fs{fact, {}};
                out.insert(ColumnKey{fact, ""});
                collect_refs(schema, fs, x.group, out);
                collect_refs(schema, fs, x.measure, out);
            }
        },
        e->node);
}

/// Identity fields a link must supply for `target`: every identity dimension
/// on the user chain, plus the engine reference for a surrogate top segment.
inline auto required_identity(const Schema& schema, ConceptId target) -> std::vector<std::pair<ConceptId, Dimension>> {
    std::vector<std::pair<ConceptId, Dimension>> out;
    ConceptId top = target;
    for (auto id : schema.super_chain(target)) {
        if (!schema.is_user(id)) {
            break;
        }
        top = id;
        for (const auto& d : schema.concept_at(id).identity) {
            out.emplace_back(id, d);
        }
    }
    if (schema.concept_at(top).identity.empty()) {
        out.emplace_back(top, Dimension{std::string(kReferenceField), Schema::kInteger, DimensionKind::identity,
                                        std::nullopt, std::nullopt});
    }
    return out;
}

inline auto assignable(ConceptId from, ConceptId to) -> bool {
    return from == to || from == Schema::kRoot || (from == Schema::kInteger && to == Schema::kDouble);
}

inline auto name_of_def(const Schema& schema, const ColumnDefinition& d) -> std::string {
    return schema.name_of(d.input) + "." + d.name;
}

/// Type-checks one definition against a schema that already contains every
/// definition's dimension; returns its dependencies.
inline auto check_definition(const Schema& schema, const ColumnDefinition& def) -> std::set<ColumnKey> {
    const Scope scope{def.input, {}};
    const auto label = name_of_def(schema, def);
    std::set<ColumnKey> deps;
    collect_refs(schema, scope, def.formula, deps);
    if (const auto* t = std::get_if<TupleCtor>(&def.formula->node)) {
        if (!schema.is_user(def.output)) {
            fail(Errc::type_mismatch, label + ": a TUPLE definition needs a concept as its type");
        }
        const auto required = required_identity(schema, def.output);
        std::set<std::string> given;
        for (const auto& [field, expr] : t->fields) {
            if (!given.insert(field).second) {
                fail(Errc::duplicate_dimension, label + ": field '" + field + "' given twice");
            }
            const auto ft = infer_type(schema, scope, expr);
            if (field == kSuperDimension) {
                const auto super = schema.concept_at(def.output).super;
                if (!super || !schema.is_user(*super) || (ft != *super && ft != Schema::kRoot)) {
                    fail(Errc::type_mismatch, label + ": field 'super' does not match the super-concept of '" +
                                                  schema.name_of(def.output) + "'");
                }
                continue;
            }
            auto it = std::find_if(required.begin(), required.end(),
                                   [&](const auto& r) { return r.second.name == field; });
            if (it == required.end()) {
                fail(Errc::unknown_dimension,
                     label + ": '" + field + "' is not an identity dimension of '" + schema.name_of(def.output) + "'");
            }
            if (!assignable(ft, it->second.range)) {
                fail(Errc::type_mismatch, label + ": field '" + field + "' has type " + detail::type_name(schema, ft) +
                                              ", expected " + schema.name_of(it->second.range));
            }
        }
        for (const auto& [owner, d] : required) {
            const bool via_super = given.contains(std::string(kSuperDimension)) && owner != def.output;
            if (!given.contains(d.name) && !via_super) {
                fail(Errc::missing_identity_field, label + ": TUPLE lacks identity field '" + d.name + "' of '" +
                                                       schema.name_of(owner) + "'");
            }
        }
        deps.insert(ColumnKey{def.output, ""});
        for (const auto& [owner, d] : required) {
            deps.insert(ColumnKey{owner, d.name});
        }
        return deps;
    }
    if (const auto* a = std::get_if<AccuCtor>(&def.formula->node)) {
        const auto fact = schema.find(a->fact_table);
        if (!fact || !schema.is_user(*fact)) {
            fail(Errc::unknown_concept, label + ": unknown fact table [" + a->fact_table + "]");
        }
        const Scope fs{*fact, {}};
        const auto group = infer_type(schema, fs, a->group);
        if (group != def.input) {
            fail(Errc::type_mismatch, label + ": ACCU group " + to_source(a->group) + " has type " +
                                          detail::type_name(schema, group) + ", expected " +
                                          schema.name_of(def.input));
        }
        const auto measure = infer_type(schema, fs, a->measure);
        ConceptId result = Schema::kInteger;
        switch (a->aggregate) {
        case Aggregate::count: result = Schema::kInteger; break;
        case Aggregate::avg: result = Schema::kDouble; break;
        default: result = measure == Schema::kRoot ? Schema::kDouble : measure;
        }
        if (a->aggregate != Aggregate::count && measure != Schema::kRoot && !is_numeric_type(measure)) {
            fail(Errc::range_mismatch, label + ": " + std::string(aggregate_name(a->aggregate)) +
                                           " needs a numeric measure, got " + schema.name_of(measure));
        }
        if (!assignable(result, def.output)) {
            fail(Errc::type_mismatch, label + ": ACCU yields " + schema.name_of(result) + ", column is " +
                                          schema.name_of(def.output));
        }
        return deps;
    }
    const auto t = infer_type(schema, scope, def.formula);
    if (def.kind == ColumnKind::constraint) {
        if (def.output != Schema::kBoolean || (t != Schema::kBoolean && t != Schema::kRoot)) {
            fail(Errc::type_mismatch, label + ": a constraint must be Boolean");
        }
    } else if (!assignable(t, def.output)) {
        fail(Errc::type_mismatch, label + ": formula has type " + detail::type_name(schema, t) + ", column is " +
                                      schema.name_of(def.output));
    }
    return deps;
}

}  // namespace detail

/// Type-checks the definitions and orders them so that every column comes
/// after the columns it reads. Definitions whose dimension is not yet in the
/// schema are added to a private copy first.
inline auto analyze(const std::vector<ColumnDefinition>& defs, const Schema& base) -> Analysis {
    Schema schema = base;
    for (const auto& d : defs) {
        const auto* existing = schema.concept_at(d.input).find_own(d.name);
        if (existing != nullptr && existing->range == d.output) {
            continue;
        }
        schema.add_dimension(d.input, DimensionKind::entity, DimensionSpec{d.name, schema.name_of(d.output), {}},
                             Checking::defer);
    }
    Analysis out;
    std::map<ColumnKey, std::size_t> producer;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        producer[ColumnKey{defs[i].input, defs[i].name}] = i;
    }
    std::vector<std::vector<std::size_t>> needs(defs.size());
    for (std::size_t i = 0; i < defs.size(); ++i) {
        std::set<ColumnKey> deps;
        try {
            deps = detail::check_definition(schema, defs[i]);
        } catch (const Error& e) {
            const auto label = detail::name_of_def(schema, defs[i]) + ":";
            if (e.detail().starts_with(label)) {
                throw;
            }
            throw Error(e.code(), label + " " + e.detail(), e.position());
        }
        for (const auto& k : deps) {
            if (auto it = producer.find(k); it != producer.end()) {
                needs[i].push_back(it->second);
            }
        }
        out.dependencies.push_back(std::move(deps));
    }
    // Kahn's algorithm, lowest index first for a stable order.
    std::vector<std::size_t> level(defs.size(), 0);
    std::vector<std::size_t> pending(defs.size());
    std::vector<std::vector<std::size_t>> users(defs.size());
    for (std::size_t i = 0; i < defs.size(); ++i) {
        std::sort(needs[i].begin(), needs[i].end());
        needs[i].erase(std::unique(needs[i].begin(), needs[i].end()), needs[i].end());
        pending[i] = needs[i].size();
        for (auto j : needs[i]) {
            users[j].push_back(i);
        }
    }
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < defs.size(); ++i) {
        if (pending[i] == 0) {
            ready.insert(i);
        }
    }
    while (!ready.empty()) {
        const auto i = *ready.begin();
        ready.erase(ready.begin());
        out.order.push_back(i);
        for (auto u : users[i]) {
            level[u] = std::max(level[u], level[i] + 1);
            if (--pending[u] == 0) {
                ready.insert(u);
            }
        }
    }
    if (out.order.size() != defs.size()) {
        std::size_t start = 0;
        while (pending[start] == 0) {
            ++start;
        }
        std::vector<std::size_t> path;
        std::map<std::size_t, std::size_t> at;
        std::size_t cur = start;
        while (!at.contains(cur)) {
            at[cur] = path.size();
            path.push_back(cur);
            cur = *std::find_if(needs[cur].begin(), needs[cur].end(), [&](auto j) { return pending[j] != 0; });
        }
        std::string listing;
        for (std::size_t k = at[cur]; k < path.size(); ++k) {
            listing += (listing.empty() ? "" : ", ") + defs[path[k]].name;
        }
        fail(Errc::dependency_cycle, "dependency cycle [" + listing + "]");
    }
    for (auto i : out.order) {
        if (out.levels.size() <= level[i]) {
            out.levels.resize(level[i] + 1);
        }
        out.levels[level[i]].push_back(i);
    }
    for (auto& l : out.levels) {
        std::sort(l.begin(), l.end());
    }
    return out;
}

/// Values of a calculated column over the input extent.
inline auto eval_calculated(const Store& store, const ColumnDefinition& def) -> Vector {
    auto ctx = EvalContext::over_extent(store, def.input);
    return evaluate(ctx, def.formula);
}

/// Resolves a TUPLE definition to ordinals of the output extent. Misses and
/// rows with an empty field are empty; with `strict` a miss is an error.
inline auto eval_link(const Store& store, const ColumnDefinition& def, bool strict = false) -> Vector {
    const auto& t = std::get<TupleCtor>(def.formula->node);
    auto ctx = EvalContext::over_extent(store, def.input);
    const auto n = ctx.size();
    std::vector<std::pair<std::string, Vector>> fields;
    for (const auto& [name, expr] : t.fields) {
        fields.emplace_back(name, evaluate(ctx, expr));
    }
    const auto& schema = store.schema();
    const auto super = schema.concept_at(def.output).super;
    Vector out(def.output, n);
    for (std::size_t k = 0; k < n; ++k) {
        Value super_identity;
        std::vector<Member> members;
        bool complete = true;
        for (const auto& [name, v] : fields) {
            if (!v.valid(k)) {
                complete = false;
                break;
            }
            if (name == kSuperDimension) {
                super_identity = store.identity_of(*super, v.ints()[k]);
            } else {
                members.push_back(Member{name, v.get(k)});
            }
        }
        std::optional<Ordinal> hit;
        if (complete) {
            hit = store.find_by_identity(def.output, make_tuple(std::move(super_identity), std::move(members)));
        }
        if (hit) {
            out.ints()[k] = *hit;
            out.mask()[k] = 1;
        } else if (strict) {
            fail(Errc::unresolved_link,
                 detail::name_of_def(schema, def) + ": row " + std::to_string(k) + " has no matching element in '" +
                     schema.name_of(def.output) + "'",
                 k);
        }
    }
    return out;
}

/// Aggregates fact rows into the input extent with one ascending pass.
inline auto eval_accu(const Store& store, const ColumnDefinition& def) -> Vector {
    const auto& a = std::get<AccuCtor>(def.formula->node);
    const auto fact = store.schema().require(a.fact_table);
    auto fctx = EvalContext::over_extent(store, fact);
    const auto group = evaluate(fctx, a.group);
    const auto measure = evaluate(fctx, a.measure);
    const auto groups = store.extent_size(def.input);
    const bool exact = measure.storage() == StorageKind::integer && measure.type() != Schema::kRoot;

    std::vector<std::int64_t> isum(groups, 0);
    std::vector<double> dsum(groups, 0.0);
    std::vector<std::uint8_t> overflow(groups, 0);
    std::vector<std::int64_t> count(groups, 0);
    std::vector<Value> best(groups);
    for (std::size_t f = 0; f < group.size(); ++f) {
        if (!group.valid(f) || !measure.valid(f)) {
            continue;
        }
        const auto g = static_cast<std::size_t>(group.ints()[f]);
        ++count[g];
        if (exact) {
            const auto m = measure.ints()[f];
            if (__builtin_add_overflow(isum[g], m, &isum[g])) {
                overflow[g] = 1;
            }
        } else if (measure.storage() == StorageKind::real) {
            dsum[g] += measure.reals()[f];
        }
        if (a.aggregate == Aggregate::min || a.aggregate == Aggregate::max) {
            const auto m = measure.get(f);
            const int c = best[g].is_empty() ? 0 : compare_values(m, best[g]);
            if (best[g].is_empty() || (a.aggregate == Aggregate::min ? c < 0 : c > 0)) {
                best[g] = m;
            }
        }
    }

    ConceptId type = Schema::kInteger;
    if (a.aggregate == Aggregate::avg || (a.aggregate != Aggregate::count && !exact)) {
        type = Schema::kDouble;
    }
    if ((a.aggregate == Aggregate::min || a.aggregate == Aggregate::max) && measure.type() != Schema::kRoot) {
        type = measure.type();
    }
    Vector out(type, groups);
    for (std::size_t g = 0; g < groups; ++g) {
        switch (a.aggregate) {
        case Aggregate::count: out.set(g, Value::integer(count[g])); break;
        case Aggregate::sum:
            if (exact) {
                if (!overflow[g]) {
                    out.set(g, Value::integer(isum[g]));
                }
            } else {
                out.set(g, Value::real(dsum[g]));
            }
            break;
        case Aggregate::avg:
            if (count[g] > 0 && !overflow[g]) {
                const double s = exact ? static_cast<double>(isum[g]) : dsum[g];
                out.set(g, Value::real(s / static_cast<double>(count[g])));
            }
            break;
        default: out.set(g, best[g]); break;
        }
    }
    return out;
}

/// Boolean column for a constraint; empty counts as false.
inline auto eval_constraint(const Store& store, ConceptId concept_id, const ExprPtr& formula) -> Vector {
    const auto ctx = EvalContext::over_extent(store, concept_id);
    const auto flags = evaluate_predicate(ctx, formula);
    Vector out(Schema::kBoolean, flags.size());
    for (std::size_t k = 0; k < flags.size(); ++k) {
        out.set(k, Value::boolean(flags[k] != 0));
    }
    return out;
}

inline auto eval_definition(const Store& store, const ColumnDefinition& def, bool strict_links) -> Vector {
    switch (def.kind) {
    case ColumnKind::link: return eval_link(store, def, strict_links);
    case ColumnKind::accumulation: return eval_accu(store, def);
    case ColumnKind::constraint: return eval_constraint(store, def.input, def.formula);
    case ColumnKind::calculated: break;
    }
    return eval_calculated(store, def);
}

struct EvaluateOptions {
    bool strict_links = false;
    unsigned threads = 1;
};

/// Registered derived columns of one store.
class ColumnCatalog {
public:
    [[nodiscard]] auto definitions() const noexcept -> const std::vector<ColumnDefinition>& { return defs_; }

    /// Adds columns to the store's schema as derived entity dimensions. The
    /// batch is checked together with the columns already registered, so
    /// definitions may refer to each other in any order.
    void define(Store& store, std::vector<ColumnDefinition> batch) {
        auto all = defs_;
        for (auto& d : batch) {
            for (const auto& e : all) {
                if (e.input == d.input && e.name == d.name) {
                    fail(Errc::duplicate_dimension, "column '" + detail::name_of_def(store.schema(), d) + "' already defined");
                }
            }
            if (store.schema().concept_at(d.input).find_own(d.name) != nullptr) {
                fail(Errc::duplicate_dimension, "concept '" + store.schema().name_of(d.input) + "' already has dimension '" + d.name + "'");
            }
            all.push_back(d);
        }
        auto analysis = analyze(all, store.schema());
        for (const auto& d : batch) {
            store.schema().add_dimension(d.input, DimensionKind::entity,
                                         DimensionSpec{d.name, store.schema().name_of(d.output), {}});
        }
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i].dependencies = analysis.dependencies[i];
        }
        for (std::size_t i = defs_.size(); i < all.size(); ++i) {
            const auto& d = all[i];
            store.declare_derived(d.input, d.name);
            for (const auto& k : d.dependencies) {
                store.add_dependency(ColumnKey{d.input, d.name}, k);
            }
        }
        defs_ = std::move(all);
        analysis_ = std::move(analysis);
    }

    void define(Store& store, ColumnDefinition def) { define(store, std::vector<ColumnDefinition>{std::move(def)}); }

    /// Computes every stale derived column level by level; columns of one
    /// level run concurrently when `threads` > 1. Returns the names of the
    /// recomputed columns in evaluation order.
    auto evaluate(Store& store, const EvaluateOptions& options = {}) -> std::vector<std::string> {
        std::vector<std::string> done;
        for (const auto& level : analysis_.levels) {
            std::vector<std::size_t> work;
            for (auto i : level) {
                const auto& d = defs_[i];
                store.create_set(d.input);
                if (store.column_state(d.input, d.name) != ColumnState::derived_valid) {
                    work.push_back(i);
                }
            }
            std::vector<Vector> results(work.size());
            std::vector<std::exception_ptr> errors(work.size());
            auto run = [&](std::size_t w) {
                try {
                    results[w] = eval_definition(store, defs_[work[w]], options.strict_links);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            };
            const auto threads = std::max(1U, options.threads);
            if (threads == 1 || work.size() < 2) {
                for (std::size_t w = 0; w < work.size(); ++w) {
                    run(w);
                }
            } else {
                for (std::size_t begin = 0; begin < work.size(); begin += threads) {
                    std::vector<std::thread> pool;
                    for (std::size_t w = begin; w < std::min(work.size(), begin + threads); ++w) {
                        pool.emplace_back(run, w);
                    }
                    for (auto& t : pool) {
                        t.join();
                    }
                }
            }
            for (const auto& e : errors) {
                if (e) {
                    std::rethrow_exception(e);
                }
            }
            for (std::size_t w = 0; w < work.size(); ++w) {
                const auto& d = defs_[work[w]];
                store.assign_derived(d.input, d.name, std::move(results[w]));
                store.invalidate(ColumnKey{d.input, d.name});
                done.push_back(d.name);
            }
        }
        return done;
    }

private:
    std::vector<ColumnDefinition> defs_;
    Analysis analysis_;
};

}  // namespace com::expr
