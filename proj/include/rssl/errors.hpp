#pragma once

#include <stdexcept>
#include <string>

namespace rssl {

/// Malformed arguments: dimension mismatch, out-of-range index, non-finite input.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A loss or optimizer hyperparameter outside its admissible range.
class InvalidHyperparameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// NaN/Inf produced during computation. The message carries the location.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace rssl
