#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ambi {

// Base of every error raised by the library. Callers that only need to know
// "did this step fail" catch this; the subclasses carry the details.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownCategory : public Error {
public:
    explicit UnknownCategory(const std::string& label)
        : Error("unknown ambiguity category: '" + label + "'"), label_(label) {}
    const std::string& label() const { return label_; }

private:
    std::string label_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

/// Malformed structured document. `path()` locates the offending field,
/// e.g. `tables[1].columns[0].name`.
class ValidationError : public Error {
public:
    ValidationError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class UnknownColumn : public Error {
public:
    using Error::Error;
};

class BackendUnavailable : public Error {
public:
    using Error::Error;
};

class NoScriptMatch : public Error {
public:
    using Error::Error;
};

class ParseFailure : public Error {
public:
    using Error::Error;
};

class DetectionFailure : public Error {
public:
    using Error::Error;
};

class ClarificationFailure : public Error {
public:
    using Error::Error;
};

class StaleAnswer : public Error {
public:
    using Error::Error;
};

/// An answer set that does not fit the open questions (unknown key,
/// duplicate or missing answers).
class InvalidAnswer : public Error {
public:
    using Error::Error;
};

/// Operation called in a session state that does not allow it.
class InvalidState : public Error {
public:
    using Error::Error;
};

class LexError : public Error {
public:
    LexError(std::size_t offset, const std::string& message)
        : Error(message + " at byte " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

enum class ExecSide { Pred, Gold };

class ExecError : public Error {
public:
    ExecError(ExecSide side, const std::string& message)
        : Error(std::string(side == ExecSide::Pred ? "pred" : "gold") + ": " + message),
          side_(side) {}
    ExecSide side() const { return side_; }

private:
    ExecSide side_;
};

class NoConfidentAnswer : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

}  // namespace ambi
