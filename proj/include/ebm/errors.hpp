#pragma once

#include <stdexcept>
#include <string>

namespace ebm {

// Base of every error raised by the library. `kind()` is a stable tag used by
// the CLI for diagnostics and by tests to check which contract was violated.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define EBM_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                             \
    public:                                                                 \
        explicit Name(const std::string& what) : Error(#Name, what) {}      \
    };

EBM_DEFINE_ERROR(QuadratureOrderTooLow)
EBM_DEFINE_ERROR(DimensionMismatch)
EBM_DEFINE_ERROR(NegativeTime)
EBM_DEFINE_ERROR(WrongVariant)
EBM_DEFINE_ERROR(NonpositiveLambda)
EBM_DEFINE_ERROR(NonMonotoneLaw)
EBM_DEFINE_ERROR(ModeOverflow)
EBM_DEFINE_ERROR(RequiresConstantG)
EBM_DEFINE_ERROR(GridMismatch)
EBM_DEFINE_ERROR(VariantMismatch)
EBM_DEFINE_ERROR(HypothesisViolated)
EBM_DEFINE_ERROR(InvalidArgument)
EBM_DEFINE_ERROR(IoError)

#undef EBM_DEFINE_ERROR

// Configuration errors carry the dotted path of the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string kind, std::string field, const std::string& what)
        : Error(std::move(kind), field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class ParseError : public ConfigError {
public:
    ParseError(std::string field, const std::string& what)
        : ConfigError("ParseError", std::move(field), what) {}
};

class ValidationError : public ConfigError {
public:
    ValidationError(std::string field, const std::string& what)
        : ConfigError("ValidationError", std::move(field), what) {}
};

} // namespace ebm
