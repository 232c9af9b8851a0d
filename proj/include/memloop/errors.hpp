#pragma once

#include <stdexcept>
#include <string>

namespace memloop {

/// Base class for all engine errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corpus document does not conform to the input schema. Message names the
/// offending JSON path.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Corpus is schema-valid but semantically broken (e.g. duplicate dia_id).
class IngestError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Persisted file has an unknown format version.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Model output could not be parsed as JSON after all repair strategies.
/// Keeps the raw text so traces can record what the model actually said.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::string raw_text)
        : Error(message), raw(std::move(raw_text)) {}
    std::string raw;
};

/// HTTP backend failed after exhausting retries.
class BackendError : public Error {
public:
    using Error::Error;
};

/// Scripted backend had no canned response for a call. Tests must be total.
class ScriptError : public Error {
public:
    using Error::Error;
};

/// A perception view failed (backend or parse); the loop treats the
/// iteration's yield as empty.
class PerceptionError : public Error {
public:
    using Error::Error;
};

/// Evaluation input problem (misaligned ids, bad items file).
class EvalError : public Error {
public:
    using Error::Error;
};

}  // namespace memloop
