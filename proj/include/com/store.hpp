#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "com/error.hpp"
#include "com/schema.hpp"
#include "com/value.hpp"
#include "com/vector.hpp"

namespace com {

enum class ColumnState { empty, stored, derived_valid, derived_stale };

/// Storage of one function: a dense ordinal-indexed vector.
class Column {
public:
    Column(Dimension dimension, std::size_t size)
        : dimension_(std::move(dimension)), data_(dimension_.range, size) {}

    [[nodiscard]] auto dimension() const noexcept -> const Dimension& { return dimension_; }
    [[nodiscard]] auto data() const noexcept -> const Vector& { return data_; }
    auto data() noexcept -> Vector& { return data_; }
    [[nodiscard]] auto state() const noexcept -> ColumnState { return state_; }
    void set_state(ColumnState s) noexcept { state_ = s; }
    [[nodiscard]] auto derived() const noexcept -> bool {
        return state_ == ColumnState::derived_valid || state_ == ColumnState::derived_stale;
    }

private:
    Dimension dimension_;
    Vector data_;
    ColumnState state_ = ColumnState::empty;
};

/// Identity key of one segment: the super element plus own identity cells.
struct SegmentKey {
    Ordinal super = -1;
    std::vector<Value> values;
    friend auto operator==(const SegmentKey& a, const SegmentKey& b) -> bool {
        return a.super == b.super && a.values == b.values;
    }
};

struct SegmentKeyHash {
    auto operator()(const SegmentKey& k) const -> std::size_t {
        std::size_t seed = std::hash<Ordinal>{}(k.super);
        for (const auto& v : k.values) {
            seed ^= hash_value(v) + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
        }
        return seed;
    }
};

/// Extent of one user concept.
class SetInstance {
public:
    SetInstance(ConceptId concept_id, std::optional<ConceptId> super_extent, bool surrogate)
        : concept_(concept_id), super_extent_(super_extent), surrogate_(surrogate) {}

    [[nodiscard]] auto concept_id() const noexcept -> ConceptId { return concept_; }
    [[nodiscard]] auto size() const noexcept -> std::size_t { return size_; }
    /// Extent holding the super elements, if the super-concept is a user concept.
    [[nodiscard]] auto super_extent() const noexcept -> std::optional<ConceptId> { return super_extent_; }
    [[nodiscard]] auto super_ordinals() const noexcept -> const std::vector<Ordinal>& { return super_ordinals_; }
    /// Elements are identified by engine-assigned references only.
    [[nodiscard]] auto surrogate() const noexcept -> bool { return surrogate_; }

    [[nodiscard]] auto column(std::string_view dim) const -> const Column* {
        auto it = columns_.find(dim);
        return it == columns_.end() ? nullptr : &it->second;
    }
    auto column(std::string_view dim) -> Column* {
        auto it = columns_.find(dim);
        return it == columns_.end() ? nullptr : &it->second;
    }
    [[nodiscard]] auto columns() const noexcept -> const std::map<std::string, Column, std::less<>>& {
        return columns_;
    }

private:
    friend class Store;

    ConceptId concept_;
    std::optional<ConceptId> super_extent_;
    bool surrogate_ = false;
    std::size_t size_ = 0;
    std::vector<Ordinal> super_ordinals_;
    std::map<std::string, Column, std::less<>> columns_;
    std::unordered_map<SegmentKey, Ordinal, SegmentKeyHash> index_;
};

/// (concept, dimension) pair naming a column; an empty dimension stands for
/// the membership of the extent itself.
struct ColumnKey {
    ConceptId concept_id;
    std::string dimension;
    friend auto operator<=>(const ColumnKey&, const ColumnKey&) = default;
};

/// A value together with the concept it belongs to.
struct TypedValue {
    ConceptId type;
    Value value;
};

/// Identity field naming the engine reference of a surrogate segment.
inline constexpr std::string_view kReferenceField = "reference";

/// Owns a schema and the extents of its user concepts.
///
/// Single writer during population and evaluation; const member functions are
/// safe for concurrent readers between write phases.
class Store {
public:
    explicit Store(Schema schema = {}) : schema_(std::move(schema)) {}

    Store(const Store&) = delete;
    auto operator=(const Store&) -> Store& = delete;
    Store(Store&&) = default;
    auto operator=(Store&&) -> Store& = default;

    [[nodiscard]] auto schema() const noexcept -> const Schema& { return schema_; }
    /// Schema mutation is only meaningful before extents of affected concepts exist.
    auto schema() noexcept -> Schema& { return schema_; }

    /// Extent of a user concept, created on demand together with its
    /// ancestors' extents.
    auto create_set(ConceptId concept_id) -> SetInstance& {
        const auto& c = schema_.concept_at(concept_id);
        if (c.kind != ConceptKind::user) {
            fail(Errc::primitive_concept_has_no_extent, "'" + c.name + "' has no extent");
        }
        if (auto it = sets_.find(concept_id); it != sets_.end()) {
            sync_columns(*it->second);
            return *it->second;
        }
        std::optional<ConceptId> super_extent;
        if (c.super && schema_.is_user(*c.super)) {
            create_set(*c.super);
            super_extent = *c.super;
        }
        const bool surrogate = c.identity.empty() && !super_extent;
        auto set = std::make_unique<SetInstance>(concept_id, super_extent, surrogate);
        auto& ref = *set;
        sets_.emplace(concept_id, std::move(set));
        sync_columns(ref);
        return ref;
    }

    [[nodiscard]] auto find_set(ConceptId concept_id) const -> const SetInstance* {
        auto it = sets_.find(concept_id);
        return it == sets_.end() ? nullptr : it->second.get();
    }

    [[nodiscard]] auto extent_size(ConceptId concept_id) const -> std::size_t {
        const auto* s = find_set(concept_id);
        return s ? s->size() : 0;
    }

    /// Appends an element; ancestor segments are found or appended. The
    /// identity may be flat or nested through super members.
    auto append_element(ConceptId concept_id, const Value& identity) -> Ordinal {
        auto& leaf = create_set(concept_id);
        const auto fields = flatten_identity(concept_id, identity);
        const auto chain = user_chain(concept_id);
        Ordinal super = -1;
        for (std::size_t k = chain.size(); k-- > 1;) {
            super = find_or_append_segment(*sets_.at(chain[k]), super, fields);
        }
        return append_segment(leaf, super, fields);
    }

    /// Unique element with this identity; never creates.
    [[nodiscard]] auto find_by_identity(ConceptId concept_id, const Value& identity) const -> std::optional<Ordinal> {
        const auto fields = flatten_identity(concept_id, identity);
        const auto chain = user_chain(concept_id);
        Ordinal super = -1;
        for (std::size_t k = chain.size(); k-- > 0;) {
            const auto* set = find_set(chain[k]);
            if (set == nullptr) {
                return std::nullopt;
            }
            auto found = find_segment(*set, super, fields, Errc::range_mismatch);
            if (!found) {
                return std::nullopt;
            }
            super = *found;
        }
        return super;
    }

    /// Appends a segment directly under a known super element. Used for
    /// subsets, where identity is inherited.
    auto append_under(ConceptId concept_id, Ordinal super, std::vector<Value> own_identity) -> Ordinal {
        auto& set = create_set(concept_id);
        const auto& c = schema_.concept_at(concept_id);
        if (own_identity.size() != c.identity.size()) {
            fail(Errc::missing_identity_field, "wrong number of identity values for '" + c.name + "'");
        }
        if (set.super_extent_) {
            check_ordinal(*set.super_extent_, super);
        }
        for (std::size_t k = 0; k < own_identity.size(); ++k) {
            own_identity[k] = conform(c.identity[k], own_identity[k]);
            if (own_identity[k].is_empty()) {
                fail(Errc::missing_identity_field, "identity dimension '" + c.identity[k].name + "' is empty");
            }
        }
        SegmentKey key{set.super_extent_ ? super : -1, std::move(own_identity)};
        if (!set.surrogate_ && set.index_.contains(key)) {
            fail(Errc::duplicate_identity, "element already exists in '" + c.name + "'");
        }
        return insert(set, std::move(key));
    }

    [[nodiscard]] auto identity_of(ConceptId concept_id, Ordinal ordinal) const -> Value {
        const auto& set = require_set(concept_id);
        check_ordinal(concept_id, ordinal);
        Value super;
        if (set.super_extent_) {
            super = identity_of(*set.super_extent_, set.super_ordinals_[static_cast<std::size_t>(ordinal)]);
        }
        std::vector<Member> members;
        if (set.surrogate_) {
            members.push_back(Member{std::string(kReferenceField), Value::integer(ordinal)});
        }
        for (const auto& d : schema_.concept_at(concept_id).identity) {
            members.push_back(Member{d.name, set.column(d.name)->data().get(static_cast<std::size_t>(ordinal))});
        }
        return make_tuple(std::move(super), std::move(members));
    }

    /// Ordinal of the element's ancestor segment in `ancestor`'s extent.
    [[nodiscard]] auto ancestor_ordinal(ConceptId concept_id, Ordinal ordinal, ConceptId ancestor) const -> Ordinal {
        ConceptId cur = concept_id;
        while (cur != ancestor) {
            const auto& set = require_set(cur);
            if (!set.super_extent_) {
                fail(Errc::invalid_argument,
                     "'" + schema_.name_of(ancestor) + "' is not an ancestor of '" + schema_.name_of(concept_id) + "'");
            }
            ordinal = set.super_ordinals_[static_cast<std::size_t>(ordinal)];
            cur = *set.super_extent_;
        }
        return ordinal;
    }

    /// Reads a function at one element. An overridden dimension yields the
    /// concatenation of segment outputs along the super chain, i.e. the most
    /// specific non-empty segment output.
    [[nodiscard]] auto read_typed(ConceptId concept_id, Ordinal ordinal, std::string_view dim) const -> TypedValue {
        check_ordinal(concept_id, ordinal);
        const auto [owner, dimension] = schema_.resolve_dimension(concept_id, dim);
        if (dim == kSuperDimension) {
            const auto& set = require_set(concept_id);
            if (!set.super_extent_) {
                return {dimension.range, Value{}};
            }
            return {dimension.range, Value::integer(set.super_ordinals_[static_cast<std::size_t>(ordinal)])};
        }
        TypedValue result{dimension.range, Value{}};
        for (const auto& [seg_owner, seg_dim] : override_chain(owner, dimension)) {
            const auto* set = find_set(seg_owner);
            const auto* col = set ? set->column(seg_dim.name) : nullptr;
            if (col == nullptr) {
                continue;
            }
            const auto at = ancestor_ordinal(concept_id, ordinal, seg_owner);
            if (static_cast<std::size_t>(at) >= col->data().size()) {
                continue;
            }
            Value cell = col->data().get(static_cast<std::size_t>(at));
            if (!cell.is_empty()) {
                result = TypedValue{seg_dim.range, std::move(cell)};
            }
        }
        return result;
    }

    [[nodiscard]] auto read_value(ConceptId concept_id, Ordinal ordinal, std::string_view dim) const -> Value {
        return read_typed(concept_id, ordinal, dim).value;
    }

    /// Column-at-a-time read of `dim` for the given rows of `concept`. The
    /// result is typed by the nearest declared range; segments declared with
    /// a more general range contribute nothing to it.
    [[nodiscard]] auto gather(ConceptId concept_id, std::span<const Ordinal> rows, std::string_view dim) const
        -> Vector {
        const auto [owner, dimension] = schema_.resolve_dimension(concept_id, dim);
        if (dim == kSuperDimension) {
            const auto* set = find_set(concept_id);
            Vector out(dimension.range, rows.size());
            if (set == nullptr || !set->super_extent_) {
                return out;
            }
            for (std::size_t k = 0; k < rows.size(); ++k) {
                if (rows[k] >= 0) {
                    out.ints()[k] = set->super_ordinals_[static_cast<std::size_t>(rows[k])];
                    out.mask()[k] = 1;
                }
            }
            return out;
        }
        Vector out(dimension.range, rows.size());
        std::vector<Ordinal> at(rows.begin(), rows.end());
        ConceptId at_concept = concept_id;
        for (const auto& [seg_owner, seg_dim] : override_chain_bottom_up(owner, dimension)) {
            lift(at, at_concept, seg_owner);
            at_concept = seg_owner;
            if (seg_dim.range != dimension.range) {
                continue;
            }
            const auto* set = find_set(seg_owner);
            const auto* col = set ? set->column(seg_dim.name) : nullptr;
            if (col == nullptr) {
                continue;
            }
            const auto& data = col->data();
            for (std::size_t k = 0; k < rows.size(); ++k) {
                if (!out.valid(k) && at[k] >= 0 && static_cast<std::size_t>(at[k]) < data.size()) {
                    out.copy_cell(k, data, static_cast<std::size_t>(at[k]));
                }
            }
        }
        return out;
    }

    /// Updates a stored entity cell and marks dependent derived columns stale.
    void write_value(ConceptId concept_id, Ordinal ordinal, std::string_view dim, const Value& v) {
        check_ordinal(concept_id, ordinal);
        if (dim == kSuperDimension) {
            fail(Errc::read_only_column, "the super dimension is part of identity");
        }
        const auto [owner, dimension] = schema_.resolve_dimension(concept_id, dim);
        if (dimension.kind == DimensionKind::identity) {
            fail(Errc::read_only_column, "'" + schema_.name_of(owner) + "." + dimension.name + "' is an identity dimension");
        }
        auto& set = create_set(owner);
        auto* col = set.column(dimension.name);
        if (col->derived()) {
            fail(Errc::read_only_column, "'" + schema_.name_of(owner) + "." + dimension.name + "' is derived");
        }
        const Value value = conform(dimension, v);
        const auto at = ancestor_ordinal(concept_id, ordinal, owner);
        if (!value.is_empty() && schema_.is_user(dimension.range)) {
            check_extends_base(owner, at, dimension, value);
            check_sub_segments(owner, at, dimension, value);
        }
        col->data().set(static_cast<std::size_t>(at), value);
        col->set_state(ColumnState::stored);
        invalidate(ColumnKey{owner, dimension.name});
    }

    /// Walks an element of `concept` up to its segment in `ancestor`; -1 if
    /// `ancestor` is not on the chain.
    [[nodiscard]] auto lift_one(ConceptId concept_id, Ordinal ordinal, ConceptId ancestor) const -> Ordinal {
        if (!schema_.is_included(concept_id, ancestor)) {
            return -1;
        }
        return ancestor_ordinal(concept_id, ordinal, ancestor);
    }

    // Derived column support.

    /// Marks a column as computed; writes through write_value are refused.
    void declare_derived(ConceptId concept_id, std::string_view dim) {
        auto& set = create_set(concept_id);
        auto* col = set.column(dim);
        if (col == nullptr) {
            fail(Errc::unknown_dimension, "'" + schema_.name_of(concept_id) + "' has no own dimension '" + std::string(dim) + "'");
        }
        col->set_state(ColumnState::derived_stale);
    }

    /// Installs computed cells for a derived column. Thread-safe for distinct
    /// columns once declare_derived has run.
    void assign_derived(ConceptId concept_id, std::string_view dim, Vector data) {
        auto* col = sets_.at(concept_id)->column(dim);
        if (data.size() != col->data().size()) {
            fail(Errc::invalid_argument, "derived column size mismatch");
        }
        if (data.type() != col->dimension().range) {
            data = convert(data, col->dimension().range);
        }
        col->data() = std::move(data);
        col->set_state(ColumnState::derived_valid);
    }

    [[nodiscard]] auto column_state(ConceptId concept_id, std::string_view dim) const -> ColumnState {
        const auto* set = find_set(concept_id);
        const auto* col = set ? set->column(dim) : nullptr;
        return col ? col->state() : ColumnState::empty;
    }

    void add_dependency(const ColumnKey& dependent, const ColumnKey& source) {
        dependents_[source].insert(dependent);
    }

    /// Marks every derived column depending (transitively) on `key` stale.
    void invalidate(const ColumnKey& key) {
        std::set<ColumnKey> seen;
        std::deque<ColumnKey> queue{key};
        while (!queue.empty()) {
            auto k = queue.front();
            queue.pop_front();
            auto it = dependents_.find(k);
            if (it == dependents_.end()) {
                continue;
            }
            for (const auto& dep : it->second) {
                if (!seen.insert(dep).second) {
                    continue;
                }
                if (auto sit = sets_.find(dep.concept_id); sit != sets_.end()) {
                    if (auto* col = sit->second->column(dep.dimension); col && col->derived()) {
                        col->set_state(ColumnState::derived_stale);
                    }
                }
                queue.push_back(dep);
            }
        }
    }

    /// Converts a vector to another primitive or element type; only the
    /// integer-to-real widening and same-storage retyping are supported.
    [[nodiscard]] static auto convert(const Vector& in, ConceptId type) -> Vector {
        if (storage_kind(type) == in.storage() && in.type() != Schema::kRoot) {
            return in.retyped(type);
        }
        Vector out(type, in.size());
        if (in.type() == Schema::kRoot) {
            return out;
        }
        if (type == Schema::kDouble && in.type() == Schema::kInteger) {
            for (std::size_t k = 0; k < in.size(); ++k) {
                if (in.valid(k)) {
                    out.reals()[k] = static_cast<double>(in.ints()[k]);
                    out.mask()[k] = 1;
                }
            }
            return out;
        }
        fail(Errc::type_mismatch, "cannot convert column values to the declared type");
    }

    /// Checks `v` against the dimension's range; integers widen to reals and
    /// element references must be valid ordinals of the range extent.
    [[nodiscard]] auto conform(const Dimension& d, const Value& v) const -> Value {
        if (v.is_empty()) {
            return v;
        }
        auto bad = [&]() {
            fail(Errc::range_mismatch, "value " + to_string(v) + " does not conform to '" + d.name + ": " +
                                           schema_.name_of(d.range) + "'");
        };
        if (d.range == Schema::kDouble) {
            if (!v.is_numeric()) {
                bad();
            }
            return Value::real(v.to_double());
        }
        if (d.range == Schema::kInteger) {
            if (v.kind() != ValueKind::integer) {
                bad();
            }
            return v;
        }
        if (d.range == Schema::kString) {
            if (v.kind() != ValueKind::text) {
                bad();
            }
            return v;
        }
        if (d.range == Schema::kBoolean) {
            if (v.kind() != ValueKind::boolean) {
                bad();
            }
            return v;
        }
        if (v.kind() != ValueKind::integer || v.as_integer() < 0 ||
            static_cast<std::size_t>(v.as_integer()) >= extent_size(d.range)) {
            bad();
        }
        return v;
    }

private:
    void sync_columns(SetInstance& set) {
        const auto& c = schema_.concept_at(set.concept_);
        for (const auto* list : {&c.identity, &c.entity}) {
            for (const auto& d : *list) {
                if (!set.columns_.contains(d.name)) {
                    set.columns_.emplace(d.name, Column(d, set.size_));
                }
            }
        }
    }

    [[nodiscard]] auto require_set(ConceptId concept_id) const -> const SetInstance& {
        const auto* set = find_set(concept_id);
        if (set == nullptr) {
            if (!schema_.is_user(concept_id)) {
                fail(Errc::primitive_concept_has_no_extent, "'" + schema_.name_of(concept_id) + "' has no extent");
            }
            fail(Errc::ordinal_out_of_range, "extent of '" + schema_.name_of(concept_id) + "' is empty");
        }
        return *set;
    }

    void check_ordinal(ConceptId concept_id, Ordinal ordinal) const {
        const auto& set = require_set(concept_id);
        if (ordinal < 0 || static_cast<std::size_t>(ordinal) >= set.size_) {
            fail(Errc::ordinal_out_of_range, "ordinal " + std::to_string(ordinal) + " outside extent of '" +
                                                 schema_.name_of(concept_id) + "' (size " + std::to_string(set.size_) + ")");
        }
    }

    /// User concepts from `concept` up to the top user ancestor.
    [[nodiscard]] auto user_chain(ConceptId concept_id) const -> std::vector<ConceptId> {
        std::vector<ConceptId> out;
        for (auto id : schema_.super_chain(concept_id)) {
            if (!schema_.is_user(id)) {
                break;
            }
            out.push_back(id);
        }
        return out;
    }

    /// Name-keyed identity fields of a flat or nested identity value; the
    /// innermost (most specific) occurrence of a name wins.
    [[nodiscard]] auto flatten_identity(ConceptId concept_id, const Value& identity) const
        -> std::map<std::string, Value, std::less<>> {
        std::map<std::string, Value, std::less<>> fields;
        const Value* cur = &identity;
        while (cur->is_tuple()) {
            for (const auto& m : cur->as_tuple().members()) {
                fields.emplace(m.dimension, m.value);
            }
            cur = &cur->as_tuple().super();
        }
        if (!cur->is_empty()) {
            fail(Errc::range_mismatch, "identity of '" + schema_.name_of(concept_id) + "' must be a tuple, got " +
                                           to_string(identity));
        }
        std::set<std::string, std::less<>> known;
        const auto chain = user_chain(concept_id);
        for (auto id : chain) {
            for (const auto& d : schema_.concept_at(id).identity) {
                known.insert(d.name);
            }
        }
        if (!chain.empty() && schema_.concept_at(chain.back()).identity.empty()) {
            known.insert(std::string(kReferenceField));
        }
        for (const auto& [name, value] : fields) {
            if (!known.contains(name)) {
                fail(Errc::range_mismatch,
                     "'" + name + "' is not an identity dimension of '" + schema_.name_of(concept_id) + "'");
            }
        }
        return fields;
    }

    [[nodiscard]] auto segment_key(const SetInstance& set, Ordinal super,
                                   const std::map<std::string, Value, std::less<>>& fields, Errc missing) const
        -> SegmentKey {
        SegmentKey key{set.super_extent_ ? super : -1, {}};
        for (const auto& d : schema_.concept_at(set.concept_).identity) {
            auto it = fields.find(d.name);
            if (it == fields.end() || it->second.is_empty()) {
                fail(missing, "identity of '" + schema_.name_of(set.concept_) + "' lacks '" + d.name + "'");
            }
            key.values.push_back(conform(d, it->second));
        }
        return key;
    }

    /// Ordinal named by the reference field of a surrogate segment, if given.
    [[nodiscard]] auto reference_field(const SetInstance& set,
                                       const std::map<std::string, Value, std::less<>>& fields) const
        -> std::optional<Ordinal> {
        auto it = fields.find(kReferenceField);
        if (it == fields.end() || it->second.is_empty()) {
            return std::nullopt;
        }
        if (it->second.kind() != ValueKind::integer || it->second.as_integer() < 0) {
            fail(Errc::range_mismatch, "reference of '" + schema_.name_of(set.concept_) + "' must be a non-negative integer");
        }
        return it->second.as_integer();
    }

    [[nodiscard]] auto find_segment(const SetInstance& set, Ordinal super,
                                    const std::map<std::string, Value, std::less<>>& fields, Errc missing) const
        -> std::optional<Ordinal> {
        if (set.surrogate_) {
            auto ref = reference_field(set, fields);
            if (!ref) {
                fail(missing, "identity of '" + schema_.name_of(set.concept_) + "' lacks its reference");
            }
            if (static_cast<std::size_t>(*ref) < set.size_) {
                return *ref;
            }
            return std::nullopt;
        }
        auto it = set.index_.find(segment_key(set, super, fields, missing));
        if (it == set.index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    auto find_or_append_segment(SetInstance& set, Ordinal super, const std::map<std::string, Value, std::less<>>& fields)
        -> Ordinal {
        if (set.surrogate_) {
            if (auto ref = reference_field(set, fields)) {
                if (static_cast<std::size_t>(*ref) >= set.size_) {
                    fail(Errc::range_mismatch, "no element with reference " + std::to_string(*ref) + " in '" +
                                                   schema_.name_of(set.concept_) + "'");
                }
                return *ref;
            }
            return insert(set, SegmentKey{-1, {}});
        }
        auto key = segment_key(set, super, fields, Errc::missing_identity_field);
        if (auto it = set.index_.find(key); it != set.index_.end()) {
            return it->second;
        }
        return insert(set, std::move(key));
    }

    auto append_segment(SetInstance& set, Ordinal super, const std::map<std::string, Value, std::less<>>& fields)
        -> Ordinal {
        if (set.surrogate_) {
            if (auto ref = reference_field(set, fields)) {
                if (static_cast<std::size_t>(*ref) < set.size_) {
                    fail(Errc::duplicate_identity, "reference " + std::to_string(*ref) + " already exists in '" +
                                                       schema_.name_of(set.concept_) + "'");
                }
                if (static_cast<std::size_t>(*ref) != set.size_) {
                    fail(Errc::range_mismatch, "reference " + std::to_string(*ref) + " is not the next free reference");
                }
            }
            return insert(set, SegmentKey{-1, {}});
        }
        auto key = segment_key(set, super, fields, Errc::missing_identity_field);
        if (set.index_.contains(key)) {
            fail(Errc::duplicate_identity, "identity already present in '" + schema_.name_of(set.concept_) + "'");
        }
        return insert(set, std::move(key));
    }

    auto insert(SetInstance& set, SegmentKey key) -> Ordinal {
        sync_columns(set);
        const auto ordinal = static_cast<Ordinal>(set.size_);
        const auto& c = schema_.concept_at(set.concept_);
        for (auto& [name, col] : set.columns_) {
            col.data().push_back_empty();
        }
        for (std::size_t k = 0; k < c.identity.size(); ++k) {
            auto& col = *set.column(c.identity[k].name);
            col.data().set(static_cast<std::size_t>(ordinal), key.values[k]);
            if (col.state() == ColumnState::empty) {
                col.set_state(ColumnState::stored);
            }
        }
        set.super_ordinals_.push_back(key.super);
        if (!set.surrogate_) {
            set.index_.emplace(std::move(key), ordinal);
        }
        ++set.size_;
        for (auto& [name, col] : set.columns_) {
            if (col.derived()) {
                col.set_state(ColumnState::derived_stale);
            }
        }
        invalidate(ColumnKey{set.concept_, ""});
        return ordinal;
    }

    /// Declarations of `dim` from the topmost overridden one down to `owner`.
    [[nodiscard]] auto override_chain(ConceptId owner, const Dimension& dim) const
        -> std::vector<std::pair<ConceptId, Dimension>> {
        auto out = override_chain_bottom_up(owner, dim);
        std::reverse(out.begin(), out.end());
        return out;
    }

    [[nodiscard]] auto override_chain_bottom_up(ConceptId owner, const Dimension& dim) const
        -> std::vector<std::pair<ConceptId, Dimension>> {
        std::vector<std::pair<ConceptId, Dimension>> out{{owner, dim}};
        while (out.back().second.overrides && out.size() <= schema_.size()) {
            const auto ref = *out.back().second.overrides;
            const auto* d = schema_.concept_at(ref.owner).find_own(ref.name);
            if (d == nullptr) {
                break;
            }
            out.emplace_back(ref.owner, *d);
        }
        return out;
    }

    /// Moves ordinals of `from` elements up to their `to` ancestors in place.
    void lift(std::vector<Ordinal>& at, ConceptId from, ConceptId to) const {
        while (from != to) {
            const auto* set = find_set(from);
            if (set == nullptr || !set->super_extent_) {
                std::fill(at.begin(), at.end(), -1);
                return;
            }
            for (auto& o : at) {
                if (o >= 0) {
                    o = set->super_ordinals_[static_cast<std::size_t>(o)];
                }
            }
            from = *set->super_extent_;
        }
    }

    /// Element `value` of `range` must be included in `base`, an element of
    /// a more general concept.
    [[nodiscard]] auto element_extends(ConceptId range, Ordinal value, const TypedValue& base) const -> bool {
        if (!schema_.is_included(range, base.type)) {
            return false;
        }
        return ancestor_ordinal(range, value, base.type) == base.value.as_integer();
    }

    void check_extends_base(ConceptId owner, Ordinal at, const Dimension& dim, const Value& value) const {
        if (!dim.overrides) {
            return;
        }
        const auto& set = require_set(owner);
        if (!set.super_extent_) {
            return;
        }
        const auto base = read_typed(*set.super_extent_, set.super_ordinals_[static_cast<std::size_t>(at)], dim.name);
        if (base.value.is_empty()) {
            return;
        }
        if (!element_extends(dim.range, value.as_integer(), base)) {
            fail(Errc::type_constraint_violation,
                 "'" + schema_.name_of(owner) + "." + dim.name + "' must extend " + schema_.name_of(base.type) + " #" +
                     std::to_string(base.value.as_integer()) + " stored in the super-element");
        }
    }

    /// Sub-elements that override `dim` must keep extending the new value.
    void check_sub_segments(ConceptId owner, Ordinal at, const Dimension& dim, const Value& value) const {
        const TypedValue base{dim.range, value};
        for (const auto& [id, set] : sets_) {
            if (id == owner || !schema_.is_included(id, owner)) {
                continue;
            }
            const auto* own = schema_.concept_at(id).find_own(dim.name);
            const auto* col = set->column(dim.name);
            if (own == nullptr || col == nullptr) {
                continue;
            }
            for (std::size_t j = 0; j < set->size_; ++j) {
                if (!col->data().valid(j) || ancestor_ordinal(id, static_cast<Ordinal>(j), owner) != at) {
                    continue;
                }
                if (!element_extends(own->range, col->data().ints()[j], base)) {
                    fail(Errc::type_constraint_violation,
                         "element #" + std::to_string(j) + " of '" + schema_.name_of(id) + "' stores a '" + dim.name +
                             "' that does not extend the new value");
                }
            }
        }
    }

    Schema schema_;
    std::map<ConceptId, std::unique_ptr<SetInstance>> sets_;
    std::map<ColumnKey, std::set<ColumnKey>> dependents_;
};

}  // namespace com
