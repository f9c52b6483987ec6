#pragma once

#include <stdexcept>
#include <string>

namespace starcomplete {

/// Extents of the operands do not fit the operation.
struct dimension_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition on the inputs does not hold.
struct contract_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed or unsupported file content.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace starcomplete
