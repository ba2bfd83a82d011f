#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "com/error.hpp"
#include "com/schema.hpp"
#include "com/value.hpp"

namespace com {

/// Position of an element inside its concept's extent.
using Ordinal = std::int64_t;

enum class StorageKind { integer, real, text, boolean };

/// Physical layout for values whose type is `type`. Element references are
/// stored as ordinals; Root (the NULL type) uses integer storage.
inline auto storage_kind(ConceptId type) -> StorageKind {
    if (type == Schema::kDouble) {
        return StorageKind::real;
    }
    if (type == Schema::kString) {
        return StorageKind::text;
    }
    if (type == Schema::kBoolean) {
        return StorageKind::boolean;
    }
    return StorageKind::integer;
}

inline auto is_numeric_type(ConceptId type) -> bool { return type == Schema::kInteger || type == Schema::kDouble; }

/// Dense typed array plus a presence mask. An absent cell is the empty
/// value <>.
class Vector {
public:
    Vector() : Vector(Schema::kRoot, 0) {}

    Vector(ConceptId type, std::size_t n) : type_(type), valid_(n, 0) {
        switch (storage_kind(type)) {
        case StorageKind::integer: data_.emplace<0>(n, 0); break;
        case StorageKind::real: data_.emplace<1>(n, 0.0); break;
        case StorageKind::text: data_.emplace<2>(n); break;
        case StorageKind::boolean: data_.emplace<3>(n, 0); break;
        }
    }

    [[nodiscard]] auto type() const noexcept -> ConceptId { return type_; }
    [[nodiscard]] auto size() const noexcept -> std::size_t { return valid_.size(); }
    [[nodiscard]] auto valid(std::size_t i) const -> bool { return valid_[i] != 0; }
    [[nodiscard]] auto storage() const noexcept -> StorageKind { return static_cast<StorageKind>(data_.index()); }

    auto ints() -> std::vector<std::int64_t>& { return std::get<0>(data_); }
    auto reals() -> std::vector<double>& { return std::get<1>(data_); }
    auto texts() -> std::vector<std::string>& { return std::get<2>(data_); }
    auto bools() -> std::vector<std::uint8_t>& { return std::get<3>(data_); }
    [[nodiscard]] auto ints() const -> const std::vector<std::int64_t>& { return std::get<0>(data_); }
    [[nodiscard]] auto reals() const -> const std::vector<double>& { return std::get<1>(data_); }
    [[nodiscard]] auto texts() const -> const std::vector<std::string>& { return std::get<2>(data_); }
    [[nodiscard]] auto bools() const -> const std::vector<std::uint8_t>& { return std::get<3>(data_); }
    auto mask() -> std::vector<std::uint8_t>& { return valid_; }
    [[nodiscard]] auto mask() const -> const std::vector<std::uint8_t>& { return valid_; }

    [[nodiscard]] auto get(std::size_t i) const -> Value {
        if (!valid(i)) {
            return Value{};
        }
        switch (storage()) {
        case StorageKind::integer: return Value::integer(ints()[i]);
        case StorageKind::real: return Value::real(reals()[i]);
        case StorageKind::text: return Value::text(texts()[i]);
        case StorageKind::boolean: return Value::boolean(bools()[i] != 0);
        }
        return Value{};
    }

    /// Stores `v` after conversion to this vector's type; integers widen to
    /// reals. Throws RangeMismatch for anything else.
    void set(std::size_t i, const Value& v) {
        if (v.is_empty()) {
            set_empty(i);
            return;
        }
        switch (storage()) {
        case StorageKind::integer:
            if (v.kind() != ValueKind::integer || type_ == Schema::kRoot) {
                mismatch(v);
            }
            ints()[i] = v.as_integer();
            break;
        case StorageKind::real:
            if (!v.is_numeric()) {
                mismatch(v);
            }
            reals()[i] = v.to_double();
            break;
        case StorageKind::text:
            if (v.kind() != ValueKind::text) {
                mismatch(v);
            }
            texts()[i] = v.as_text();
            break;
        case StorageKind::boolean:
            if (v.kind() != ValueKind::boolean) {
                mismatch(v);
            }
            bools()[i] = v.as_boolean() ? 1 : 0;
            break;
        }
        valid_[i] = 1;
    }

    void set_empty(std::size_t i) {
        valid_[i] = 0;
        if (storage() == StorageKind::text) {
            texts()[i].clear();
        }
    }

    void push_back_empty() {
        valid_.push_back(0);
        std::visit([](auto& vec) { vec.emplace_back(); }, data_);
    }

    /// Copies cell `from` of `src` (same storage) into cell `to`.
    void copy_cell(std::size_t to, const Vector& src, std::size_t from) {
        if (!src.valid(from)) {
            set_empty(to);
            return;
        }
        std::visit(
            [&](auto& vec) {
                using V = std::decay_t<decltype(vec)>;
                vec[to] = std::get<V>(src.data_)[from];
            },
            data_);
        valid_[to] = 1;
    }

    /// Cells at `rows`; negative row numbers produce empty cells.
    [[nodiscard]] auto gather(std::span<const Ordinal> rows) const -> Vector {
        Vector out(type_, rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            if (rows[k] >= 0) {
                out.copy_cell(k, *this, static_cast<std::size_t>(rows[k]));
            }
        }
        return out;
    }

    /// Same cells reinterpreted as another type with identical storage.
    [[nodiscard]] auto retyped(ConceptId type) const -> Vector {
        Vector out = *this;
        out.type_ = type;
        return out;
    }

private:
    [[noreturn]] void mismatch(const Value& v) const {
        fail(Errc::range_mismatch, "value " + to_string(v) + " does not conform to range id " +
                                       std::to_string(type_.value));
    }

    ConceptId type_;
    std::variant<std::vector<std::int64_t>, std::vector<double>, std::vector<std::string>, std::vector<std::uint8_t>>
        data_;
    std::vector<std::uint8_t> valid_;
};

}  // namespace com
