#pragma once

#include <stdexcept>
#include <string>

namespace ncf {

// Bad inputs: shapes, malformed files, unknown names. CLI exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown at runtime: NaN forward values, step-count blow-up,
// diverging training. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ncf
