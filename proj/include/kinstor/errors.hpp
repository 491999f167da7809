#pragma once

#include <stdexcept>
#include <string>

namespace kinstor {

/// Base class for all library errors. `code()` maps onto CLI exit codes:
/// input/validation problems exit 2, runtime failures exit 1.
class Error : public std::runtime_error {
public:
    enum class Kind { validation, runtime };

    Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return kind_ == Kind::validation ? 2 : 1; }

private:
    Kind kind_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(Kind::validation, what) {}
};

struct RuntimeFailure : Error {
    explicit RuntimeFailure(const std::string& what) : Error(Kind::runtime, what) {}
};

// Calibration
struct TooFewSamples : ValidationError {
    using ValidationError::ValidationError;
};
struct DegenerateDesign : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

// Models
struct NonConstantKappa : ValidationError {
    using ValidationError::ValidationError;
};

// Ensemble
struct EmptyInput : ValidationError {
    using ValidationError::ValidationError;
};
struct SizeMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct GridMismatch : ValidationError {
    using ValidationError::ValidationError;
};

// Oracles
struct NonCausal : ValidationError {
    using ValidationError::ValidationError;
};

// Autodiff
struct DetachedNode : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

// Solver
struct NonFiniteState : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};
struct NonFiniteLoss : RuntimeFailure {
    using RuntimeFailure::RuntimeFailure;
};

// Policy
struct MissingCheckpoint : ValidationError {
    using ValidationError::ValidationError;
};

}  // namespace kinstor
