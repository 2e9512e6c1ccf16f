#pragma once

#include <stdexcept>
#include <string>

namespace d2nn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A graph failed structural checks or was used inconsistently.
class GraphError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(int line, int column, const std::string& message)
        : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
          line_(line), column_(column), detail_(message) {}

    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    int line_;
    int column_;
    std::string detail_;
};

/// Binary file decoding failure. The kind lets callers tell malformed input apart.
class FormatError : public Error {
public:
    enum class Kind { bad_magic, truncated, dimension_overflow, unsupported, io };

    FormatError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Training diverged or was configured inconsistently.
class TrainingError : public Error {
public:
    using Error::Error;
};

}  // namespace d2nn
