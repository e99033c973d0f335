#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace amem {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller violated an operation's documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::ptrdiff_t expected, std::ptrdiff_t actual)
        : Error("embedding dimension mismatch: expected " + std::to_string(expected) + ", got " +
                std::to_string(actual)),
          expected_(expected),
          actual_(actual) {}

    std::ptrdiff_t expected() const noexcept { return expected_; }
    std::ptrdiff_t actual() const noexcept { return actual_; }

private:
    std::ptrdiff_t expected_;
    std::ptrdiff_t actual_;
};

class UnknownMemoryId : public Error {
public:
    explicit UnknownMemoryId(std::uint64_t id)
        : Error("unknown memory id " + std::to_string(id)), id_(id) {}
    std::uint64_t id() const noexcept { return id_; }

private:
    std::uint64_t id_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class SchemaVersionError : public Error {
public:
    using Error::Error;
};

// A persisted record could not be decoded. line() is 1-based.
class CorruptRecord : public Error {
public:
    CorruptRecord(std::size_t line, const std::string& what)
        : Error("corrupted record at line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Network or backend failure. Retryable by nature; thrown once retries are spent.
class TransportError : public Error {
public:
    using Error::Error;
};

// Agent output did not satisfy its response contract after the parse-retry budget.
class ParseError : public Error {
public:
    ParseError(std::string field, const std::string& what, std::string raw = {})
        : Error(what), field_(std::move(field)), raw_(std::move(raw)) {}

    // Name of the offending field, or empty when no JSON object was found at all.
    const std::string& field() const noexcept { return field_; }
    const std::string& raw_response() const noexcept { return raw_; }

private:
    std::string field_;
    std::string raw_;
};

}  // namespace amem
