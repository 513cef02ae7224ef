#pragma once

#include <stdexcept>
#include <string>

namespace ctikg {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Transient transport failure; the gateway retries these.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& msg) : Error(msg) {}
};

// Backend gave up after the retry budget, or is not configured.
class BackendUnavailable : public Error {
public:
    explicit BackendUnavailable(const std::string& msg) : Error(msg) {}
};

// Strict replay asked for a request that was never recorded.
class MissingFixture : public Error {
public:
    MissingFixture(const std::string& hash, const std::string& kind)
        : Error("missing " + kind + " fixture for request hash " + hash), hash_(hash) {}
    const std::string& hash() const { return hash_; }

private:
    std::string hash_;
};

// Model output (or an input file) could not be parsed.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// A pipeline phase exhausted its repair budget. Carries the last raw response.
class PhaseError : public Error {
public:
    PhaseError(const std::string& phase, const std::string& msg, std::string raw_response)
        : Error(phase + ": " + msg), raw_response_(std::move(raw_response)) {}
    const std::string& raw_response() const { return raw_response_; }

private:
    std::string raw_response_;
};

// Input file does not match the documented schema.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

// Operator mistake (bad flags, missing files). CLI maps this to exit code 2.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Invariant breach inside the library.
class InternalError : public Error {
public:
    explicit InternalError(const std::string& msg) : Error(msg) {}
};

} // namespace ctikg
