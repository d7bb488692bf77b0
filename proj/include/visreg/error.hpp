#pragma once

#include <stdexcept>
#include <string>

namespace visreg {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& message) : std::runtime_error(message) {}
};

/// Bad input: out-of-range index, shape mismatch, malformed file content,
/// hyperparameters outside their domain.
class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error(message) {}
};

/// Malformed line in a text input. Carries the 1-based line number.
class ParseError : public InvalidArgument {
public:
    ParseError(std::size_t line, const std::string& message)
        : InvalidArgument("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A regularized normal-equation system that cannot be factorized.
class SingularSystem : public Error {
public:
    explicit SingularSystem(const std::string& message) : Error(message) {}
};

/// Optimization produced a non-finite value.
class Divergence : public Error {
public:
    Divergence(int epoch, const std::string& message)
        : Error("epoch " + std::to_string(epoch) + ": " + message), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(message) {}
};

}  // namespace visreg
