#pragma once

#include <stdexcept>
#include <string>

namespace metal {

struct MetalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/operand dimensions do not line up.
struct ShapeError : MetalError {
    using MetalError::MetalError;
};

// A softmax row with no finite entry, or a diagonal-masked sequence of length 1.
struct MaskedSoftmaxError : MetalError {
    using MetalError::MetalError;
};

struct ConfigError : MetalError {
    using MetalError::MetalError;
};

struct DataError : MetalError {
    using MetalError::MetalError;
};

struct CheckpointError : MetalError {
    using MetalError::MetalError;
};

struct DivergenceError : MetalError {
    using MetalError::MetalError;
};

}  // namespace metal
