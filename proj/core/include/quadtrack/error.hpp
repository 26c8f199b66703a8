#pragma once

#include <stdexcept>
#include <string>

namespace quadtrack {

// Invalid argument shapes, sizes or configuration values.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or missing input files (images, sequences, models, configs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Divergence, non-finite values or failed gradient checks.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace quadtrack
