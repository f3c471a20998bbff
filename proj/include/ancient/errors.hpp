#pragma once

#include <stdexcept>
#include <string>

namespace ancient {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define ANCIENT_DEFINE_ERROR(Name)               \
    class Name : public Error {                  \
    public:                                      \
        using Error::Error;                      \
    }

ANCIENT_DEFINE_ERROR(DomainError);
ANCIENT_DEFINE_ERROR(SingularMetric);
ANCIENT_DEFINE_ERROR(OutOfChart);
ANCIENT_DEFINE_ERROR(DegenerateDelta);
ANCIENT_DEFINE_ERROR(InvalidProfile);
ANCIENT_DEFINE_ERROR(NoConvergence);
ANCIENT_DEFINE_ERROR(InvalidParams);
ANCIENT_DEFINE_ERROR(ComplexRoots);
ANCIENT_DEFINE_ERROR(UnknownPreset);
ANCIENT_DEFINE_ERROR(StepUnderflow);
ANCIENT_DEFINE_ERROR(BranchError);
ANCIENT_DEFINE_ERROR(NoMatch);
ANCIENT_DEFINE_ERROR(Inconclusive);
ANCIENT_DEFINE_ERROR(ValidationError);
ANCIENT_DEFINE_ERROR(IoError);

#undef ANCIENT_DEFINE_ERROR

/// JSON syntax error with the offending line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace ancient
