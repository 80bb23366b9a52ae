#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qqeval {

// Root of every error this library throws on purpose. Anything else escaping
// a qqeval call is a bug.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent configuration; `field` names the offending option
// (a struct field, or the CLI flag once surfaced to users).
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("invalid " + field + ": " + what), field_(std::move(field)), detail_(what) {}
    const std::string& field() const { return field_; }
    const std::string& detail() const { return detail_; }

private:
    std::string field_;
    std::string detail_;
};

// Bad input file content; `row` is 1-based.
class IngestError : public Error {
public:
    IngestError(int row, std::string field, const std::string& what)
        : Error("row " + std::to_string(row) + ": " + what),
          row_(row),
          field_(std::move(field)) {}
    int row() const { return row_; }
    const std::string& field() const { return field_; }

private:
    int row_;
    std::string field_;
};

// A placeholder problem while rendering a prompt template.
class TemplateError : public Error {
public:
    TemplateError(std::string placeholder, const std::string& what)
        : Error("template error: " + what), placeholder_(std::move(placeholder)) {}
    const std::string& placeholder() const { return placeholder_; }

private:
    std::string placeholder_;
};

// Base for everything a parser can report about model output.
class ParseError : public Error {
public:
    enum class Kind {
        missing_block,   // no fenced block found at all
        missing_field,   // a required labeled line/section is absent
        empty_section,   // a labeled section is present but blank
        bad_value,       // value token is not a strict integer
        out_of_range,    // integer outside the scale / index bounds
    };

    ParseError(Kind kind, std::string field, std::string token, const std::string& what)
        : Error(what), kind_(kind), field_(std::move(field)), token_(std::move(token)) {}

    Kind kind() const { return kind_; }
    const std::string& field() const { return field_; }
    const std::string& token() const { return token_; }

private:
    Kind kind_;
    std::string field_;
    std::string token_;
};

// Structural fault: block or labeled field missing / empty.
class FormatError : public ParseError {
public:
    FormatError(Kind kind, std::string field, const std::string& what)
        : ParseError(kind, std::move(field), "", what) {}
};

// Value fault: non-integer token or integer outside the allowed range.
class RangeError : public ParseError {
public:
    RangeError(Kind kind, std::string field, std::string token, const std::string& what)
        : ParseError(kind, std::move(field), std::move(token), what) {}
};

// Terminal outcome of parse-with-repair: both the original reply and the
// single re-ask failed. Carries both raw texts so traces can keep them.
class RepairError : public ParseError {
public:
    RepairError(const ParseError& last, std::vector<std::string> raw_texts)
        : ParseError(last.kind(), last.field(), last.token(),
                     std::string("unparseable after repair: ") + last.what()),
          raw_texts_(std::move(raw_texts)) {}
    const std::vector<std::string>& raw_texts() const { return raw_texts_; }

private:
    std::vector<std::string> raw_texts_;
};

// Network-level failure after retries were exhausted.
class TransportError : public Error {
public:
    TransportError(int status, const std::string& what)
        : Error(what), status_(status) {}
    // Last HTTP status observed, or 0 when the connection itself failed.
    int status() const { return status_; }

private:
    int status_;
};

// Authentication rejected; never retried.
class AuthError : public Error {
public:
    explicit AuthError(const std::string& what) : Error(what) {}
};

// Replay transcript has no entry for the requested tag.
class ReplayMissError : public Error {
public:
    explicit ReplayMissError(std::string tag)
        : Error("replay miss: no transcript entry for request tag '" + tag + "'"),
          tag_(std::move(tag)) {}
    const std::string& tag() const { return tag_; }

private:
    std::string tag_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// Caller misuse of an analysis/library function.
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& what) : Error(what) {}
};

}  // namespace qqeval
