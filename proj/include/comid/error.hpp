#pragma once

#include <stdexcept>
#include <string>

namespace comid {

/// Base of every error raised by the toolkit. `kind()` names the failure
/// class so callers can branch without RTTI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define COMID_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(#Name, what) {}        \
    }

// trace-model
COMID_DEFINE_ERROR(MalformedStream);
COMID_DEFINE_ERROR(ArityMismatch);
COMID_DEFINE_ERROR(SchemaConflict);
COMID_DEFINE_ERROR(IoError);

// grouping
COMID_DEFINE_ERROR(KTooLarge);
COMID_DEFINE_ERROR(EmptyCluster);
COMID_DEFINE_ERROR(TooFewContexts);
COMID_DEFINE_ERROR(EmptyContext);

// detector
COMID_DEFINE_ERROR(InvalidSpec);
COMID_DEFINE_ERROR(EmptyResults);
COMID_DEFINE_ERROR(EmptyHistory);
COMID_DEFINE_ERROR(ModelMissing);

// simulator / harness
COMID_DEFINE_ERROR(InvalidScenario);
COMID_DEFINE_ERROR(TooFewTraces);
COMID_DEFINE_ERROR(UnknownAblation);

#undef COMID_DEFINE_ERROR

/// Parse failure with the 1-based line number of the offending input.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("ParseError", "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace comid
