#pragma once

#include <stdexcept>
#include <string>

namespace mk {

/// Base class for all library failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    /// True for input/validation problems, false for numerical failures.
    virtual bool is_validation() const noexcept { return true; }
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class InfeasibleError : public Error {
public:
    using Error::Error;
};

class EmptyDomainError : public Error {
public:
    using Error::Error;
};

class NumericalFailure : public Error {
public:
    using Error::Error;
    bool is_validation() const noexcept override { return false; }
};

class StencilError : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

class NumericalError : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

class NoConvergenceError : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

class DegenerateError : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

}  // namespace mk
