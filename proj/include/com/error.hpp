#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace com {

/// Failure categories shared by every layer of the engine.
enum class Errc {
    duplicate_dimension,
    cyclic_composition,
    extension_has_super,
    duplicate_concept,
    unknown_concept,
    unknown_range,
    invalid_super,
    cycle_introduced,
    type_constraint_violation,
    unknown_dimension,
    primitive_concept_has_no_extent,
    duplicate_identity,
    missing_identity_field,
    range_mismatch,
    ordinal_out_of_range,
    read_only_column,
    lex_error,
    parse_error,
    unknown_column,
    type_mismatch,
    dependency_cycle,
    unresolved_link,
    ambiguous_dimension,
    csv_format_error,
    io_error,
    invalid_argument,
};

inline auto errc_name(Errc code) -> std::string_view {
    switch (code) {
    case Errc::duplicate_dimension: return "DuplicateDimension";
    case Errc::cyclic_composition: return "CyclicComposition";
    case Errc::extension_has_super: return "ExtensionHasSuper";
    case Errc::duplicate_concept: return "DuplicateConcept";
    case Errc::unknown_concept: return "UnknownConcept";
    case Errc::unknown_range: return "UnknownRange";
    case Errc::invalid_super: return "InvalidSuper";
    case Errc::cycle_introduced: return "CycleIntroduced";
    case Errc::type_constraint_violation: return "TypeConstraintViolation";
    case Errc::unknown_dimension: return "UnknownDimension";
    case Errc::primitive_concept_has_no_extent: return "PrimitiveConceptHasNoExtent";
    case Errc::duplicate_identity: return "DuplicateIdentity";
    case Errc::missing_identity_field: return "MissingIdentityField";
    case Errc::range_mismatch: return "RangeMismatch";
    case Errc::ordinal_out_of_range: return "OrdinalOutOfRange";
    case Errc::read_only_column: return "ReadOnlyColumn";
    case Errc::lex_error: return "LexError";
    case Errc::parse_error: return "ParseError";
    case Errc::unknown_column: return "UnknownColumn";
    case Errc::type_mismatch: return "TypeMismatch";
    case Errc::dependency_cycle: return "DependencyCycle";
    case Errc::unresolved_link: return "UnresolvedLink";
    case Errc::ambiguous_dimension: return "AmbiguousDimension";
    case Errc::csv_format_error: return "CsvFormatError";
    case Errc::io_error: return "IoError";
    case Errc::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Engine error. `position` is a byte offset for lexer/parser failures and a
/// 1-based row number for CSV failures; it is empty otherwise.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message, std::optional<std::size_t> position = std::nullopt)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message),
          code_(code),
          detail_(message),
          position_(position) {}

    [[nodiscard]] auto code() const noexcept -> Errc { return code_; }
    [[nodiscard]] auto detail() const noexcept -> const std::string& { return detail_; }
    [[nodiscard]] auto position() const noexcept -> std::optional<std::size_t> { return position_; }

private:
    Errc code_;
    std::string detail_;
    std::optional<std::size_t> position_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message,
                              std::optional<std::size_t> position = std::nullopt) {
    throw Error(code, message, position);
}

}  // namespace com
