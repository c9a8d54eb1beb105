#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splat {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad values passed to an operation (non-finite inputs, out-of-range knobs).
struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// Mismatched dimensions between containers that must agree.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed file content. Carries the byte offset where parsing gave up.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
    std::size_t byte_offset = 0;
};

// Filesystem-level failure (missing file, short read, unwritable path).
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace splat
