#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace filterlab {

// Every failure raised by the library derives from Error so the CLI can map
// it to an exit code without knowing the concrete type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
public:
    using Error::Error;
};

class ModelEvaluationError : public Error {
public:
    using Error::Error;
};

class ExplosionError : public Error {
public:
    ExplosionError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

class DegenerateMeasureError : public Error {
public:
    using Error::Error;
};

class DegenerateSelectionError : public Error {
public:
    DegenerateSelectionError(const std::string& what, std::size_t minor_index)
        : Error(what + " (minor " + std::to_string(minor_index) + ")"), minor_index_(minor_index) {}
    std::size_t minor_index() const { return minor_index_; }

private:
    std::size_t minor_index_;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

class PositivityLossError : public Error {
public:
    PositivityLossError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

class SupportCoverageError : public Error {
public:
    using Error::Error;
};

class UnsupportedConfigurationError : public Error {
public:
    using Error::Error;
};

}  // namespace filterlab
