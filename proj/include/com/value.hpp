#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "com/error.hpp"

namespace com {

class TupleValue;

enum class ValueKind { empty, integer, real, text, boolean, tuple };

struct EmptyValue {
    friend auto operator==(EmptyValue, EmptyValue) -> bool { return true; }
};

/// The universal datum: a primitive, a tuple, or the empty tuple <> (NULL).
/// Values are immutable; tuples are shared by pointer and never mutated.
class Value {
public:
    using TuplePtr = std::shared_ptr<const TupleValue>;

    Value() = default;

    static auto integer(std::int64_t v) -> Value { return Value(Storage(std::in_place_index<1>, v)); }
    static auto real(double v) -> Value { return Value(Storage(std::in_place_index<2>, v)); }
    static auto text(std::string v) -> Value { return Value(Storage(std::in_place_index<3>, std::move(v))); }
    static auto boolean(bool v) -> Value { return Value(Storage(std::in_place_index<4>, v)); }
    static auto tuple(TuplePtr t) -> Value { return Value(Storage(std::in_place_index<5>, std::move(t))); }

    [[nodiscard]] auto kind() const noexcept -> ValueKind { return static_cast<ValueKind>(data_.index()); }
    [[nodiscard]] auto is_empty() const noexcept -> bool { return kind() == ValueKind::empty; }
    [[nodiscard]] auto is_tuple() const noexcept -> bool { return kind() == ValueKind::tuple; }
    [[nodiscard]] auto is_primitive() const noexcept -> bool { return !is_empty() && !is_tuple(); }
    [[nodiscard]] auto is_numeric() const noexcept -> bool {
        return kind() == ValueKind::integer || kind() == ValueKind::real;
    }

    [[nodiscard]] auto as_integer() const -> std::int64_t { return std::get<1>(data_); }
    [[nodiscard]] auto as_real() const -> double { return std::get<2>(data_); }
    [[nodiscard]] auto as_text() const -> const std::string& { return std::get<3>(data_); }
    [[nodiscard]] auto as_boolean() const -> bool { return std::get<4>(data_); }
    [[nodiscard]] auto as_tuple() const -> const TupleValue& { return *std::get<5>(data_); }
    [[nodiscard]] auto tuple_ptr() const -> const TuplePtr& { return std::get<5>(data_); }

    /// Numeric value widened to double; integer or real only.
    [[nodiscard]] auto to_double() const -> double {
        return kind() == ValueKind::integer ? static_cast<double>(as_integer()) : as_real();
    }

    friend auto operator==(const Value& a, const Value& b) -> bool;

private:
    using Storage = std::variant<EmptyValue, std::int64_t, double, std::string, bool, TuplePtr>;
    explicit Value(Storage s) : data_(std::move(s)) {}
    Storage data_;
};

struct Member {
    std::string dimension;
    Value value;
};

/// Name used for a primitive segment attached below a non-empty base.
inline constexpr std::string_view kAnonymousDimension = "";

/// A normalized tuple <super:b | f1:a1, ...>. Members are kept sorted by
/// dimension name, never hold Empty, and names are unique.
class TupleValue {
public:
    TupleValue(Value super, std::vector<Member> members)
        : super_(std::move(super)), members_(std::move(members)) {}

    [[nodiscard]] auto super() const noexcept -> const Value& { return super_; }
    [[nodiscard]] auto members() const noexcept -> const std::vector<Member>& { return members_; }
    [[nodiscard]] auto has_super() const noexcept -> bool { return !super_.is_empty(); }

    [[nodiscard]] auto find(std::string_view dimension) const -> const Value* {
        auto it = std::lower_bound(members_.begin(), members_.end(), dimension,
                                   [](const Member& m, std::string_view d) { return m.dimension < d; });
        if (it == members_.end() || it->dimension != dimension) {
            return nullptr;
        }
        return &it->value;
    }

private:
    Value super_;
    std::vector<Member> members_;
};

inline auto operator==(const Value& a, const Value& b) -> bool {
    if (a.kind() != b.kind()) {
        return false;
    }
    switch (a.kind()) {
    case ValueKind::empty: return true;
    case ValueKind::integer: return a.as_integer() == b.as_integer();
    case ValueKind::real: return a.as_real() == b.as_real();
    case ValueKind::text: return a.as_text() == b.as_text();
    case ValueKind::boolean: return a.as_boolean() == b.as_boolean();
    case ValueKind::tuple: {
        if (a.tuple_ptr() == b.tuple_ptr()) {
            return true;
        }
        const auto& ta = a.as_tuple();
        const auto& tb = b.as_tuple();
        if (!(ta.super() == tb.super()) || ta.members().size() != tb.members().size()) {
            return false;
        }
        for (std::size_t i = 0; i < ta.members().size(); ++i) {
            if (ta.members()[i].dimension != tb.members()[i].dimension ||
                !(ta.members()[i].value == tb.members()[i].value)) {
                return false;
            }
        }
        return true;
    }
    }
    return false;
}

/// Build a normalized value from a base and named members. Empty members are
/// dropped; no members collapses to the base; an empty base with no members
/// is Empty.
inline auto make_tuple(Value super, std::vector<Member> members) -> Value {
    std::sort(members.begin(), members.end(),
              [](const Member& a, const Member& b) { return a.dimension < b.dimension; });
    for (std::size_t i = 1; i < members.size(); ++i) {
        if (members[i].dimension == members[i - 1].dimension) {
            fail(Errc::duplicate_dimension, "dimension '" + members[i].dimension + "' appears twice");
        }
    }
    std::erase_if(members, [](const Member& m) { return m.value.is_empty(); });
    if (members.empty()) {
        return super;
    }
    return Value::tuple(std::make_shared<const TupleValue>(std::move(super), std::move(members)));
}

inline auto tuple_equal(const Value& a, const Value& b) -> bool { return a == b; }

/// <base | extension>. The extension must not carry its own base.
inline auto concat_extension(const Value& base, const Value& extension) -> Value {
    if (extension.is_tuple() && extension.as_tuple().has_super()) {
        fail(Errc::extension_has_super, "extension already has a super member");
    }
    if (base.is_empty()) {
        return extension;
    }
    if (extension.is_empty()) {
        return base;
    }
    if (extension.is_primitive()) {
        return make_tuple(base, {Member{std::string(kAnonymousDimension), extension}});
    }
    return make_tuple(base, extension.as_tuple().members());
}

/// Segments from the outermost base to the leaf. Concatenating them in order
/// reproduces the value.
inline auto decompose_segments(const Value& v) -> std::vector<Value> {
    std::vector<Value> out;
    if (v.is_empty()) {
        return out;
    }
    if (!v.is_tuple()) {
        out.push_back(v);
        return out;
    }
    const auto& t = v.as_tuple();
    out = decompose_segments(t.super());
    const auto& members = t.members();
    if (members.size() == 1 && members.front().dimension == kAnonymousDimension && t.has_super()) {
        out.push_back(members.front().value);
    } else {
        out.push_back(make_tuple(Value{}, members));
    }
    return out;
}

/// Total order over values: by kind, then by content.
inline auto compare_values(const Value& a, const Value& b) -> int {
    if (a.kind() != b.kind()) {
        return a.kind() < b.kind() ? -1 : 1;
    }
    auto cmp = [](const auto& x, const auto& y) { return x < y ? -1 : (y < x ? 1 : 0); };
    switch (a.kind()) {
    case ValueKind::empty: return 0;
    case ValueKind::integer: return cmp(a.as_integer(), b.as_integer());
    case ValueKind::real: {
        const double x = a.as_real();
        const double y = b.as_real();
        if (std::isnan(x) || std::isnan(y)) {
            return cmp(std::isnan(x), std::isnan(y));
        }
        return cmp(x, y);
    }
    case ValueKind::text: return a.as_text().compare(b.as_text()) < 0 ? -1 : (a.as_text() == b.as_text() ? 0 : 1);
    case ValueKind::boolean: return cmp(a.as_boolean(), b.as_boolean());
    case ValueKind::tuple: {
        const auto& ta = a.as_tuple();
        const auto& tb = b.as_tuple();
        if (int c = compare_values(ta.super(), tb.super()); c != 0) {
            return c;
        }
        const auto n = std::min(ta.members().size(), tb.members().size());
        for (std::size_t i = 0; i < n; ++i) {
            if (int c = ta.members()[i].dimension.compare(tb.members()[i].dimension); c != 0) {
                return c < 0 ? -1 : 1;
            }
            if (int c = compare_values(ta.members()[i].value, tb.members()[i].value); c != 0) {
                return c;
            }
        }
        return cmp(ta.members().size(), tb.members().size());
    }
    }
    return 0;
}

struct ValueLess {
    auto operator()(const Value& a, const Value& b) const -> bool { return compare_values(a, b) < 0; }
};

inline auto hash_value(const Value& v) -> std::size_t {
    auto mix = [](std::size_t seed, std::size_t h) {
        return seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
    };
    std::size_t seed = static_cast<std::size_t>(v.kind());
    switch (v.kind()) {
    case ValueKind::empty: return seed;
    case ValueKind::integer: return mix(seed, std::hash<std::int64_t>{}(v.as_integer()));
    case ValueKind::real: return mix(seed, std::hash<double>{}(v.as_real()));
    case ValueKind::text: return mix(seed, std::hash<std::string>{}(v.as_text()));
    case ValueKind::boolean: return mix(seed, std::hash<bool>{}(v.as_boolean()));
    case ValueKind::tuple: {
        const auto& t = v.as_tuple();
        seed = mix(seed, hash_value(t.super()));
        for (const auto& m : t.members()) {
            seed = mix(seed, std::hash<std::string>{}(m.dimension));
            seed = mix(seed, hash_value(m.value));
        }
        return seed;
    }
    }
    return seed;
}

struct ValueHash {
    auto operator()(const Value& v) const -> std::size_t { return hash_value(v); }
};

/// Shortest round-trip decimal form of a double.
inline auto format_real(double v) -> std::string {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline auto quote_text(std::string_view s) -> std::string {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline auto to_string(const Value& v) -> std::string {
    switch (v.kind()) {
    case ValueKind::empty: return "<>";
    case ValueKind::integer: return std::to_string(v.as_integer());
    case ValueKind::real: return format_real(v.as_real());
    case ValueKind::text: return quote_text(v.as_text());
    case ValueKind::boolean: return v.as_boolean() ? "true" : "false";
    case ValueKind::tuple: {
        const auto& t = v.as_tuple();
        std::string out = "<";
        if (t.has_super()) {
            out += "super:" + to_string(t.super()) + " | ";
        }
        bool first = true;
        for (const auto& m : t.members()) {
            if (!first) {
                out += ", ";
            }
            first = false;
            if (!m.dimension.empty()) {
                out += m.dimension + ":";
            }
            out += to_string(m.value);
        }
        return out + ">";
    }
    }
    return "?";
}

/// Mutable composition graph used to assemble values whose members refer to
/// other nodes. Materializing rejects any node that contains itself.
class ValueGraph {
public:
    using NodeId = std::size_t;
    struct Ref {
        NodeId node;
    };
    using Slot = std::variant<Value, Ref>;

    auto add_node() -> NodeId {
        nodes_.emplace_back();
        return nodes_.size() - 1;
    }

    void set_super(NodeId node, Slot slot) { nodes_.at(node).super = std::move(slot); }

    void add_member(NodeId node, std::string dimension, Slot slot) {
        nodes_.at(node).members.emplace_back(std::move(dimension), std::move(slot));
    }

    [[nodiscard]] auto size() const noexcept -> std::size_t { return nodes_.size(); }

    [[nodiscard]] auto materialize(NodeId root) const -> Value {
        std::vector<State> state(nodes_.size(), State::unvisited);
        std::vector<Value> memo(nodes_.size());
        return visit(root, state, memo);
    }

private:
    enum class State { unvisited, active, done };
    struct Node {
        Slot super = Value{};
        std::vector<std::pair<std::string, Slot>> members;
    };

    auto resolve(const Slot& slot, std::vector<State>& state, std::vector<Value>& memo) const -> Value {
        if (const auto* ref = std::get_if<Ref>(&slot)) {
            return visit(ref->node, state, memo);
        }
        return std::get<Value>(slot);
    }

    auto visit(NodeId id, std::vector<State>& state, std::vector<Value>& memo) const -> Value {
        if (id >= nodes_.size()) {
            fail(Errc::invalid_argument, "unknown graph node " + std::to_string(id));
        }
        if (state[id] == State::done) {
            return memo[id];
        }
        if (state[id] == State::active) {
            fail(Errc::cyclic_composition, "node " + std::to_string(id) + " contains itself");
        }
        state[id] = State::active;
        const auto& node = nodes_[id];
        Value super = resolve(node.super, state, memo);
        std::vector<Member> members;
        members.reserve(node.members.size());
        for (const auto& [name, slot] : node.members) {
            members.push_back(Member{name, resolve(slot, state, memo)});
        }
        memo[id] = make_tuple(std::move(super), std::move(members));
        state[id] = State::done;
        return memo[id];
    }

    std::vector<Node> nodes_;
};

}  // namespace com
