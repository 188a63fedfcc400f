#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rmtlab {

// Base for every domain error raised by the library. The CLI maps these to
// exit status 1; anything else is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

// Zero reference norm, zero row/column, empty aggregate.
class DegenerateError : public Error {
public:
    using Error::Error;
};

class EncodeRangeError : public Error {
public:
    using Error::Error;
};

class DecodeError : public Error {
public:
    DecodeError(std::size_t position, std::string reason)
        : Error("decode error at token " + std::to_string(position) + ": " + reason),
          position_(position), reason_(std::move(reason)) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t position_;
    std::string reason_;
};

class DatasetError : public Error {
public:
    DatasetError(std::size_t line, const std::string& what)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    // 1-based; 0 when the error is not tied to a line (manifest problems).
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class GenerationError : public Error {
public:
    GenerationError(std::uint64_t index, const std::string& what)
        : Error("example " + std::to_string(index) + ": " + what), index_(index) {}

    std::uint64_t index() const noexcept { return index_; }

private:
    std::uint64_t index_;
};

class TrainingDivergence : public Error {
public:
    using Error::Error;
};

}  // namespace rmtlab
