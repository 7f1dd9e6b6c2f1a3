// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vista {

/// Root of every exception the library throws on a contract violation.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Document and file formats.
class SchemaError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// graph
class UnknownState : public Error {
public:
    using Error::Error;
};

// prompting
class ParseError : public Error {
public:
    using Error::Error;
};

class UnknownTool : public Error {
public:
    using Error::Error;
};

class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

class ContextOverflow : public Error {
public:
    using Error::Error;
};

// oracle
class OracleUnavailable : public Error {
public:
    using Error::Error;
};

class FixtureMiss : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

// tools
class ToolUnavailable : public Error {
public:
    using Error::Error;
};

class BadQuery : public Error {
public:
    using Error::Error;
};

// engine
class NoFeasibleAction : public Error {
public:
    using Error::Error;
};

class PlannerParseFailure : public Error {
public:
    using Error::Error;
};

// trace
class ReplayDivergence : public Error {
public:
    ReplayDivergence(std::size_t event_index, const std::string& what)
        : Error(what), event_index_(event_index) {}

    /// Index into the recorded event list of the first event that differs.
    std::size_t event_index() const noexcept { return event_index_; }

private:
    std::size_t event_index_;
};

/// Short class name of a library exception, e.g. "ToolUnavailable"; "Error"
/// for other vista errors and "exception" for anything else.
inline std::string_view error_kind(const std::exception& e) {
#define VISTA_KIND(T) \
    if (dynamic_cast<const T*>(&e)) return #T;
    VISTA_KIND(SchemaError)
    VISTA_KIND(ValidationError)
    VISTA_KIND(PreconditionError)
    VISTA_KIND(UnknownState)
    VISTA_KIND(ParseError)
    VISTA_KIND(UnknownTool)
    VISTA_KIND(IndexOutOfRange)
    VISTA_KIND(ContextOverflow)
    VISTA_KIND(OracleUnavailable)
    VISTA_KIND(FixtureMiss)
    VISTA_KIND(BudgetExceeded)
    VISTA_KIND(ToolUnavailable)
    VISTA_KIND(BadQuery)
    VISTA_KIND(NoFeasibleAction)
    VISTA_KIND(PlannerParseFailure)
    VISTA_KIND(ReplayDivergence)
    VISTA_KIND(Error)
#undef VISTA_KIND
    return "exception";
}

} // namespace vista
