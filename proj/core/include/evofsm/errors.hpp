#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace evofsm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed JSON document. `path` is a JSON-path style locator such as `$.states[2].id`.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class NoTransitionFired : public Error {
public:
    using Error::Error;
};

class RouterParseError : public Error {
public:
    using Error::Error;
};

/// Any failure of a chat, embedding or tool backend.
class BackendFailure : public Error {
public:
    using Error::Error;
};

/// Live endpoint failed after the retry budget was spent.
class EndpointError : public BackendFailure {
public:
    using BackendFailure::BackendFailure;
};

/// Scripted backend has no rule for the request.
class ScriptMiss : public BackendFailure {
public:
    using BackendFailure::BackendFailure;
};

/// Replay cassette has no recording for the request fingerprint.
class CassetteMiss : public BackendFailure {
public:
    CassetteMiss(std::string fingerprint, std::string nearest)
        : BackendFailure("cassette miss for fingerprint " + fingerprint +
                         (nearest.empty() ? std::string(" (cassette empty)")
                                          : " (nearest recorded: " + nearest + ")")),
          fingerprint_(std::move(fingerprint)), nearest_(std::move(nearest)) {}

    const std::string& fingerprint() const noexcept { return fingerprint_; }
    const std::string& nearest() const noexcept { return nearest_; }

private:
    std::string fingerprint_;
    std::string nearest_;
};

/// Tool fixture corpus has no entry for the normalized key.
class FixtureMiss : public BackendFailure {
public:
    explicit FixtureMiss(std::string key)
        : BackendFailure("fixture miss: " + key), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class NoValidProposal : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class StorageFailure : public Error {
public:
    using Error::Error;
};

}  // namespace evofsm
