#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "com/error.hpp"

namespace com {

struct ConceptId {
    std::uint32_t value = 0;
    friend auto operator<=>(const ConceptId&, const ConceptId&) = default;
};

struct ConceptIdHash {
    auto operator()(ConceptId id) const noexcept -> std::size_t { return std::hash<std::uint32_t>{}(id.value); }
};

enum class ConceptKind { root, primitive_value, primitive_reference, user };
enum class DimensionKind { identity, entity };

/// Name of the distinguished base dimension.
inline constexpr std::string_view kSuperDimension = "super";

struct DimensionRef {
    ConceptId owner;
    std::string name;
    friend auto operator==(const DimensionRef&, const DimensionRef&) -> bool = default;
};

struct Dimension {
    std::string name;
    ConceptId range;
    DimensionKind kind = DimensionKind::entity;
    std::optional<DimensionRef> overrides;
    /// CHAR(n) length bound; recorded, not enforced.
    std::optional<std::size_t> char_length;
};

struct Concept {
    ConceptId id;
    std::string name;
    ConceptKind kind = ConceptKind::user;
    std::optional<ConceptId> super;
    std::vector<Dimension> identity;
    std::vector<Dimension> entity;

    [[nodiscard]] auto find_own(std::string_view dim) const -> const Dimension* {
        for (const auto* list : {&identity, &entity}) {
            for (const auto& d : *list) {
                if (d.name == dim) {
                    return &d;
                }
            }
        }
        return nullptr;
    }
};

/// Dimension declaration by range name, as written in a schema listing.
struct DimensionSpec {
    std::string name;
    std::string range;
    std::optional<std::size_t> char_length = std::nullopt;
};

enum class Checking { enforce, defer };

enum class ViolationKind { cycle, broken_inclusion, type_constraint, dimension_clash };

struct Violation {
    ViolationKind kind;
    std::string concept_name;
    std::string dimension;
    std::string message;
    friend auto operator==(const Violation&, const Violation&) -> bool = default;
};

using ValidationReport = std::vector<Violation>;

struct ClosureEntry {
    std::vector<std::string> path;
    ConceptId concept_id;
};

enum class Direction { greater, lesser };

/// Concept registry forming a nested partially ordered set. Builtins occupy
/// fixed ids; user concepts are appended in definition order.
class Schema {
public:
    static constexpr ConceptId kRoot{0};
    static constexpr ConceptId kInteger{1};
    static constexpr ConceptId kDouble{2};
    static constexpr ConceptId kString{3};
    static constexpr ConceptId kBoolean{4};
    static constexpr ConceptId kReference{5};

    Schema() {
        add_builtin("Root", ConceptKind::root, std::nullopt);
        add_builtin("Integer", ConceptKind::primitive_value, kRoot);
        add_builtin("Double", ConceptKind::primitive_value, kRoot);
        add_builtin("String", ConceptKind::primitive_value, kRoot);
        add_builtin("Boolean", ConceptKind::primitive_value, kRoot);
        add_builtin("Reference", ConceptKind::primitive_reference, kRoot);
    }

    [[nodiscard]] auto size() const noexcept -> std::size_t { return concepts_.size(); }
    [[nodiscard]] auto concepts() const noexcept -> const std::vector<Concept>& { return concepts_; }

    [[nodiscard]] auto concept_at(ConceptId id) const -> const Concept& {
        if (id.value >= concepts_.size()) {
            fail(Errc::unknown_concept, "concept id " + std::to_string(id.value));
        }
        return concepts_[id.value];
    }

    [[nodiscard]] auto name_of(ConceptId id) const -> const std::string& { return concept_at(id).name; }

    /// Looks up a concept by name; builtin type aliases (DOUBLE, INT, ...) are
    /// accepted case-insensitively.
    [[nodiscard]] auto find(std::string_view name) const -> std::optional<ConceptId> {
        if (auto it = by_name_.find(std::string(name)); it != by_name_.end()) {
            return it->second;
        }
        std::string upper(name);
        std::transform(upper.begin(), upper.end(), upper.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        static const std::map<std::string, ConceptId, std::less<>> aliases = {
            {"ROOT", kRoot},       {"INTEGER", kInteger}, {"INT", kInteger},      {"LONG", kInteger},
            {"DOUBLE", kDouble},   {"FLOAT", kDouble},    {"REAL", kDouble},      {"STRING", kString},
            {"TEXT", kString},     {"VARCHAR", kString},  {"BOOLEAN", kBoolean},  {"BOOL", kBoolean},
            {"REFERENCE", kReference},
        };
        if (auto it = aliases.find(upper); it != aliases.end()) {
            return it->second;
        }
        return std::nullopt;
    }

    [[nodiscard]] auto require(std::string_view name) const -> ConceptId {
        if (auto id = find(name)) {
            return *id;
        }
        fail(Errc::unknown_concept, "unknown concept '" + std::string(name) + "'");
    }

    [[nodiscard]] auto is_user(ConceptId id) const -> bool { return concept_at(id).kind == ConceptKind::user; }
    [[nodiscard]] auto is_primitive_value(ConceptId id) const -> bool {
        return concept_at(id).kind == ConceptKind::primitive_value;
    }

    /// Registers a concept. With Checking::defer only naming errors are raised;
    /// cycles and override violations are left for validate().
    auto define_concept(std::string_view name, std::string_view super_name,
                        const std::vector<DimensionSpec>& identity, const std::vector<DimensionSpec>& entity,
                        Checking checking = Checking::enforce) -> ConceptId {
        if (find(name)) {
            fail(Errc::duplicate_concept, "concept '" + std::string(name) + "' already defined");
        }
        const ConceptId id{static_cast<std::uint32_t>(concepts_.size())};
        auto resolve_name = [&](std::string_view n) -> std::optional<ConceptId> {
            if (n == name) {
                return id;
            }
            return find(n);
        };

        Concept c;
        c.id = id;
        c.name = std::string(name);
        c.kind = ConceptKind::user;
        if (super_name.empty()) {
            c.super = kRoot;
        } else {
            auto s = resolve_name(super_name);
            if (!s) {
                fail(Errc::unknown_range, "concept '" + c.name + "': unknown super-concept '" +
                                              std::string(super_name) + "'");
            }
            if (*s != id && concept_at(*s).kind == ConceptKind::primitive_value) {
                fail(Errc::invalid_super, "concept '" + c.name + "' cannot extend primitive value set '" +
                                              std::string(super_name) + "'");
            }
            c.super = *s;
        }

        std::set<std::string> seen;
        auto add_dims = [&](const std::vector<DimensionSpec>& specs, DimensionKind kind,
                            std::vector<Dimension>& out) {
            for (const auto& spec : specs) {
                check_dimension_name(c.name, spec.name);
                if (!seen.insert(spec.name).second) {
                    fail(Errc::duplicate_dimension,
                         "concept '" + c.name + "' declares dimension '" + spec.name + "' twice");
                }
                auto r = resolve_name(spec.range);
                if (!r) {
                    fail(Errc::unknown_range, "concept '" + c.name + "', dimension '" + spec.name +
                                                  "': unknown range '" + spec.range + "'");
                }
                if (*r != id) {
                    check_range_kind(c.name, spec.name, *r);
                }
                out.push_back(Dimension{spec.name, *r, kind, std::nullopt, spec.char_length});
            }
        };
        add_dims(identity, DimensionKind::identity, c.identity);
        add_dims(entity, DimensionKind::entity, c.entity);

        Schema next = *this;
        next.concepts_.push_back(std::move(c));
        next.by_name_[std::string(name)] = id;
        commit(std::move(next), checking);
        return id;
    }

    /// Adds one dimension to an existing user concept.
    void add_dimension(ConceptId concept_id, DimensionKind kind, const DimensionSpec& spec,
                       Checking checking = Checking::enforce) {
        const auto& c = concept_at(concept_id);
        if (c.kind != ConceptKind::user) {
            fail(Errc::invalid_argument, "cannot add dimensions to builtin '" + c.name + "'");
        }
        check_dimension_name(c.name, spec.name);
        if (c.find_own(spec.name)) {
            fail(Errc::duplicate_dimension, "concept '" + c.name + "' already has dimension '" + spec.name + "'");
        }
        auto r = find(spec.range);
        if (!r) {
            fail(Errc::unknown_range,
                 "concept '" + c.name + "', dimension '" + spec.name + "': unknown range '" + spec.range + "'");
        }
        check_range_kind(c.name, spec.name, *r);
        Schema next = *this;
        auto& target = next.concepts_[concept_id.value];
        (kind == DimensionKind::identity ? target.identity : target.entity)
            .push_back(Dimension{spec.name, *r, kind, std::nullopt, spec.char_length});
        commit(std::move(next), checking);
    }

    /// Moves a concept under a different super-concept.
    void reparent(ConceptId concept_id, ConceptId new_super, Checking checking = Checking::enforce) {
        const auto& c = concept_at(concept_id);
        if (c.kind != ConceptKind::user) {
            fail(Errc::invalid_argument, "cannot reparent builtin '" + c.name + "'");
        }
        if (concept_at(new_super).kind == ConceptKind::primitive_value) {
            fail(Errc::invalid_super, "concept '" + c.name + "' cannot extend primitive value set");
        }
        Schema next = *this;
        next.concepts_[concept_id.value].super = new_super;
        commit(std::move(next), checking);
    }

    /// Every structural violation currently present. Never throws.
    [[nodiscard]] auto validate() const -> ValidationReport {
        ValidationReport report;
        check_inclusion_tree(report);
        check_partial_order(report);
        check_overrides(report);
        return report;
    }

    /// Nearest definition of `name` on the concept or its super chain.
    /// "super" names the base dimension of the concept itself.
    [[nodiscard]] auto resolve_dimension(ConceptId concept_id, std::string_view name) const
        -> std::pair<ConceptId, Dimension> {
        if (auto found = try_resolve_dimension(concept_id, name)) {
            return *found;
        }
        fail(Errc::unknown_dimension,
             "concept '" + name_of(concept_id) + "' has no dimension '" + std::string(name) + "'");
    }

    [[nodiscard]] auto try_resolve_dimension(ConceptId concept_id, std::string_view name) const
        -> std::optional<std::pair<ConceptId, Dimension>> {
        const auto& start = concept_at(concept_id);
        if (name == kSuperDimension) {
            if (!start.super) {
                return std::nullopt;
            }
            return std::pair{concept_id, Dimension{std::string(kSuperDimension), *start.super, DimensionKind::identity,
                                                std::nullopt, std::nullopt}};
        }
        std::optional<ConceptId> cur = concept_id;
        for (std::size_t steps = 0; cur && steps <= concepts_.size(); ++steps) {
            const auto& c = concepts_[cur->value];
            if (const auto* d = c.find_own(name)) {
                return std::pair{c.id, *d};
            }
            cur = c.super;
        }
        return std::nullopt;
    }

    /// The concept followed by its ancestors, stopping before Root.
    [[nodiscard]] auto super_chain(ConceptId concept_id) const -> std::vector<ConceptId> {
        std::vector<ConceptId> out;
        std::optional<ConceptId> cur = concept_id;
        while (cur && *cur != kRoot && out.size() <= concepts_.size()) {
            out.push_back(*cur);
            cur = concepts_[cur->value].super;
        }
        return out;
    }

    /// True when `sub` equals `base` or reaches it through super links.
    [[nodiscard]] auto is_included(ConceptId sub, ConceptId base) const -> bool {
        std::optional<ConceptId> cur = sub;
        for (std::size_t steps = 0; cur && steps <= concepts_.size(); ++steps) {
            if (*cur == base) {
                return true;
            }
            cur = concepts_[cur->value].super;
        }
        return false;
    }

    [[nodiscard]] auto direct_subconcepts(ConceptId concept_id) const -> std::vector<ConceptId> {
        std::vector<ConceptId> out;
        for (const auto& c : concepts_) {
            if (c.super && *c.super == concept_id && c.id != concept_id) {
                out.push_back(c.id);
            }
        }
        return out;
    }

    /// Number of identity dimensions plus the super dimension when the base is
    /// not Root.
    [[nodiscard]] auto arity(ConceptId concept_id) const -> std::size_t {
        const auto& c = concept_at(concept_id);
        return c.identity.size() + ((c.super && *c.super != kRoot) ? 1U : 0U);
    }

    /// All strictly greater concepts with one shortest witnessing path each,
    /// in breadth-first order.
    [[nodiscard]] auto greater_closure(ConceptId concept_id) const -> std::vector<ClosureEntry> {
        std::vector<ClosureEntry> out;
        std::vector<bool> seen(concepts_.size(), false);
        seen[concept_at(concept_id).id.value] = true;
        std::deque<ClosureEntry> queue;
        queue.push_back(ClosureEntry{{}, concept_id});
        while (!queue.empty()) {
            auto entry = std::move(queue.front());
            queue.pop_front();
            for (const auto& [label, target] : edges(entry.concept_id)) {
                if (seen[target.value]) {
                    continue;
                }
                seen[target.value] = true;
                auto path = entry.path;
                path.push_back(label);
                out.push_back(ClosureEntry{path, target});
                queue.push_back(ClosureEntry{std::move(path), target});
            }
        }
        return out;
    }

    [[nodiscard]] auto greater_set(ConceptId concept_id) const -> std::set<ConceptId> {
        std::set<ConceptId> out;
        for (const auto& e : greater_closure(concept_id)) {
            out.insert(e.concept_id);
        }
        return out;
    }

    /// Concepts greater than both (join-like) or lesser than both
    /// (relationship-like), ascending by id.
    [[nodiscard]] auto common_neighbors(ConceptId a, ConceptId b, Direction direction) const
        -> std::vector<ConceptId> {
        std::vector<ConceptId> out;
        if (direction == Direction::greater) {
            const auto ga = greater_set(a);
            const auto gb = greater_set(b);
            std::set_intersection(ga.begin(), ga.end(), gb.begin(), gb.end(), std::back_inserter(out));
            return out;
        }
        for (const auto& c : concepts_) {
            if (c.id == a || c.id == b) {
                continue;
            }
            const auto g = greater_set(c.id);
            if (g.contains(a) && g.contains(b)) {
                out.push_back(c.id);
            }
        }
        return out;
    }

    /// Labelled immediate-greater edges: super first, then identity and
    /// entity dimensions in declaration order.
    [[nodiscard]] auto edges(ConceptId concept_id) const -> std::vector<std::pair<std::string, ConceptId>> {
        const auto& c = concept_at(concept_id);
        std::vector<std::pair<std::string, ConceptId>> out;
        if (c.super) {
            out.emplace_back(std::string(kSuperDimension), *c.super);
        }
        for (const auto* list : {&c.identity, &c.entity}) {
            for (const auto& d : *list) {
                out.emplace_back(d.name, d.range);
            }
        }
        return out;
    }

private:
    void add_builtin(std::string name, ConceptKind kind, std::optional<ConceptId> super) {
        Concept c;
        c.id = ConceptId{static_cast<std::uint32_t>(concepts_.size())};
        c.name = name;
        c.kind = kind;
        c.super = super;
        by_name_[name] = c.id;
        concepts_.push_back(std::move(c));
    }

    static void check_dimension_name(const std::string& concept_id, const std::string& dim) {
        if (dim.empty() || dim == kSuperDimension) {
            fail(Errc::duplicate_dimension, "concept '" + concept_id + "': dimension name '" + dim + "' is reserved");
        }
    }

    void check_range_kind(const std::string& concept_id, const std::string& dim, ConceptId range) const {
        const auto kind = concept_at(range).kind;
        if (kind == ConceptKind::root || kind == ConceptKind::primitive_reference) {
            fail(Errc::unknown_range, "concept '" + concept_id + "', dimension '" + dim + "': '" + name_of(range) +
                                          "' is not a usable range");
        }
    }

    /// Recomputes override links: an entity dimension overrides the nearest
    /// same-named entity dimension of an ancestor.
    void relink_overrides() {
        for (auto& c : concepts_) {
            for (auto* list : {&c.identity, &c.entity}) {
                for (auto& d : *list) {
                    d.overrides.reset();
                    if (d.kind != DimensionKind::entity || !c.super) {
                        continue;
                    }
                    if (auto found = try_resolve_dimension(*c.super, d.name);
                        found && found->second.kind == DimensionKind::entity) {
                        d.overrides = DimensionRef{found->first, d.name};
                    }
                }
            }
        }
    }

    /// Swaps in a mutated copy; in enforce mode any violation the mutation
    /// introduces aborts it.
    void commit(Schema next, Checking checking) {
        next.relink_overrides();
        if (checking == Checking::enforce) {
            const auto before = validate();
            for (const auto& v : next.validate()) {
                if (std::find(before.begin(), before.end(), v) != before.end()) {
                    continue;
                }
                switch (v.kind) {
                case ViolationKind::cycle:
                case ViolationKind::broken_inclusion: fail(Errc::cycle_introduced, v.message);
                case ViolationKind::type_constraint: fail(Errc::type_constraint_violation, v.message);
                case ViolationKind::dimension_clash: fail(Errc::duplicate_dimension, v.message);
                }
            }
        }
        *this = std::move(next);
    }

    void check_inclusion_tree(ValidationReport& report) const {
        std::set<ConceptId> reported;
        for (const auto& c : concepts_) {
            if (c.id == kRoot) {
                continue;
            }
            if (!c.super || c.super->value >= concepts_.size()) {
                report.push_back({ViolationKind::broken_inclusion, c.name, "", "concept '" + c.name + "' has no super"});
                continue;
            }
            // Walk up; a revisit means the chain loops without reaching Root.
            std::vector<ConceptId> path;
            std::optional<ConceptId> cur = c.id;
            while (cur && *cur != kRoot) {
                if (std::find(path.begin(), path.end(), *cur) != path.end()) {
                    std::vector<ConceptId> loop(std::find(path.begin(), path.end(), *cur), path.end());
                    const auto head = *std::min_element(loop.begin(), loop.end());
                    if (reported.insert(head).second) {
                        std::string names;
                        for (auto id : loop) {
                            names += (names.empty() ? "" : " -> ") + name_of(id);
                        }
                        report.push_back({ViolationKind::broken_inclusion, name_of(head), "",
                                          "inclusion loop: " + names});
                    }
                    break;
                }
                path.push_back(*cur);
                cur = concepts_[cur->value].super;
            }
        }
    }

    void check_partial_order(ValidationReport& report) const {
        // Tarjan's strongly connected components over all dimension edges.
        const std::size_t n = concepts_.size();
        std::vector<int> index(n, -1);
        std::vector<int> low(n, 0);
        std::vector<bool> on_stack(n, false);
        std::vector<std::uint32_t> stack;
        int counter = 0;
        std::function<void(std::uint32_t)> strong = [&](std::uint32_t v) {
            index[v] = low[v] = counter++;
            stack.push_back(v);
            on_stack[v] = true;
            for (const auto& [label, target] : edges(ConceptId{v})) {
                const auto w = target.value;
                if (index[w] < 0) {
                    strong(w);
                    low[v] = std::min(low[v], low[w]);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
            }
            if (low[v] == index[v]) {
                std::vector<std::uint32_t> component;
                std::uint32_t w = 0;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    component.push_back(w);
                } while (w != v);
                bool self_loop = false;
                if (component.size() == 1) {
                    for (const auto& [label, target] : edges(ConceptId{v})) {
                        self_loop = self_loop || target.value == v;
                    }
                }
                if (component.size() > 1 || self_loop) {
                    std::sort(component.begin(), component.end());
                    std::string names;
                    for (auto id : component) {
                        names += (names.empty() ? "" : ", ") + concepts_[id].name;
                    }
                    report.push_back({ViolationKind::cycle, concepts_[component.front()].name, "",
                                      "partial order cycle among {" + names + "}"});
                }
            }
        };
        for (std::uint32_t v = 0; v < n; ++v) {
            if (index[v] < 0) {
                strong(v);
            }
        }
    }

    void check_overrides(ValidationReport& report) const {
        for (const auto& c : concepts_) {
            if (!c.super) {
                continue;
            }
            for (const auto* list : {&c.identity, &c.entity}) {
                for (const auto& d : *list) {
                    auto inherited = try_resolve_dimension(*c.super, d.name);
                    if (!inherited) {
                        continue;
                    }
                    if (d.kind == DimensionKind::identity || inherited->second.kind == DimensionKind::identity) {
                        report.push_back({ViolationKind::dimension_clash, c.name, d.name,
                                          "dimension '" + c.name + "." + d.name +
                                              "' redeclares an identity dimension of '" +
                                              name_of(inherited->first) + "'"});
                        continue;
                    }
                    if (!is_included(d.range, inherited->second.range)) {
                        report.push_back({ViolationKind::type_constraint, c.name, d.name,
                                          "dimension '" + c.name + "." + d.name + "' has range '" + name_of(d.range) +
                                              "' which is not included in '" + name_of(inherited->second.range) +
                                              "' of '" + name_of(inherited->first) + "'"});
                    }
                }
            }
        }
    }

    std::vector<Concept> concepts_;
    std::unordered_map<std::string, ConceptId> by_name_;
};

}  // namespace com
