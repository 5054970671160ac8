#pragma once

#include <stdexcept>
#include <string>

namespace nseg {

// Base for every error the library raises on purpose. The CLI maps these to
// exit code 1; anything else is treated as a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, corrupt, architecture_mismatch, io };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace nseg
