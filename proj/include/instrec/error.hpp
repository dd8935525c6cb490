#pragma once

#include <stdexcept>
#include <string>

namespace instrec {

/// Base class of every error raised by the library. `kind()` is a short
/// stable token, used by the CLI for machine-parseable error lines.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define INSTREC_DEFINE_ERROR(Name, token)                                   \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(token, message) {} \
    }

INSTREC_DEFINE_ERROR(DecodeError, "decode");
INSTREC_DEFINE_ERROR(UnsupportedFormatError, "unsupported-format");
INSTREC_DEFINE_ERROR(EmptySignalError, "empty-signal");
INSTREC_DEFINE_ERROR(DegenerateSignalError, "degenerate-signal");
INSTREC_DEFINE_ERROR(TooShortError, "too-short");
INSTREC_DEFINE_ERROR(DimensionError, "dimension");
INSTREC_DEFINE_ERROR(CapacityError, "capacity");
INSTREC_DEFINE_ERROR(EmptyDatasetError, "empty-dataset");
INSTREC_DEFINE_ERROR(InvalidArgumentError, "invalid-argument");
INSTREC_DEFINE_ERROR(IncompatibleModelError, "model-incompatible");
INSTREC_DEFINE_ERROR(ParseError, "parse");
INSTREC_DEFINE_ERROR(FormatError, "format");
INSTREC_DEFINE_ERROR(IoError, "io");

#undef INSTREC_DEFINE_ERROR

}  // namespace instrec
