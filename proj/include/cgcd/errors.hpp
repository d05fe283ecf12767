#pragma once

#include <stdexcept>
#include <string>

namespace cgcd {

// Bad configuration or invalid arguments. CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent data (files, labels, shapes). CLI exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf or otherwise unusable numerics. CLI exit code 4.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised by the pipeline to name the stage a module error came from.
class StageError : public std::runtime_error {
public:
    enum class Kind { config, data, numerical };

    StageError(std::string stage, Kind kind, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), kind_(kind) {}

    const std::string& stage() const noexcept { return stage_; }
    Kind kind() const noexcept { return kind_; }

private:
    std::string stage_;
    Kind kind_;
};

}  // namespace cgcd
