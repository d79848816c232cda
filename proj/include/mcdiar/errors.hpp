#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcdiar {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidTurn : public Error {
public:
    using Error::Error;
};

// Malformed text input. `line()` is 1-based; 0 means "no line information".
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)),
          line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Well-formed records whose shapes or tiling are inconsistent.
class SchemaError : public Error {
public:
    using Error::Error;
};

class MissingLabel : public Error {
public:
    explicit MissingLabel(std::size_t stream)
        : Error("no cluster label for selected stream " + std::to_string(stream)), stream_(stream) {}
    std::size_t stream() const noexcept { return stream_; }

private:
    std::size_t stream_;
};

// COP-Kmeans could not place an item: every cluster holds a cannot-link partner.
class Infeasible : public Error {
public:
    explicit Infeasible(std::size_t item)
        : Error("constrained assignment infeasible at item " + std::to_string(item)), item_(item) {}
    std::size_t item() const noexcept { return item_; }

private:
    std::size_t item_;
};

class EmptyReference : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class AllChannelsFailed : public Error {
public:
    using Error::Error;
};

}  // namespace mcdiar
