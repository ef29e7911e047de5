#pragma once

#include <stdexcept>
#include <string>

namespace semfit {

/// Matrix or vector sizes disagree with what the model expects.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// More free parameters than distinct covariance moments.
class OverParameterizedError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Pattern violates an identification or symmetry rule.
class ModelSpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A matrix that must be positive definite is not. `which` names it ("S", "Sigma", ...).
class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(std::string which, const std::string& what)
        : std::runtime_error(which + ": " + what), which_(std::move(which)) {}

    [[nodiscard]] const std::string& which() const noexcept { return which_; }

private:
    std::string which_;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace semfit
