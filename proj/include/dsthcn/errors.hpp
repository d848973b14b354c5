#pragma once

#include <stdexcept>
#include <string>

namespace dsthcn {

// Shape/extent mismatches between tensors and operators.
struct dim_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid argument values (bad k, label out of range, ...).
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed files (SKL header, CSV schema).
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf reached a place it must not.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace dsthcn
