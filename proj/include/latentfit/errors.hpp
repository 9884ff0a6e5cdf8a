#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace latentfit {

/// Raised when a model, cache or file is used in a state that does not allow the call.
class InvalidState : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Binary or JSON container could not be decoded (magic, version, truncation, schema).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The least-squares model is unidentifiable for the supplied signal.
class FitDegenerate : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The spectral estimator found no usable peak.
class EstimateUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, const std::string& what)
        : std::runtime_error(what), epoch_(epoch) {}

    /// Global epoch counter (all datasets, repetitions and stages) at which the loss went non-finite.
    [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw std::invalid_argument(message);
}

}  // namespace detail
}  // namespace latentfit
