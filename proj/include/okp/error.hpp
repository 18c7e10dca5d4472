#pragma once

#include <stdexcept>
#include <string>

namespace okp {

/// Input tensors whose extents do not compose for the requested operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration or argument values outside their documented domain.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Filesystem failures (missing file, unwritable path, short read).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed on-disk container (checkpoint, dataset dump, CIFAR-10 batch).
class FormatError : public std::runtime_error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, length_mismatch, architecture_mismatch, bad_header, bad_record };

    FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Calling an operation in a state that violates its precondition (e.g. backward before forward).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace okp
