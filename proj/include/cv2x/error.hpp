#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cv2x {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A length or size bound was violated (payload too large, frame target too small).
class SizeError : public Error {
public:
    using Error::Error;
};

/// A frame is structurally invalid: truncated, bad magic, bad version, bad length.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// A frame failed its integrity check.
class CorruptionError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A configuration value is unknown, missing or out of range. `field()` names it.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A line of a text log could not be parsed. Lines are numbered from 1.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace cv2x
