#pragma once

#include <stdexcept>
#include <string>

namespace lsv {

// Bad inputs (parameters, configs, file contents). Drivers map this to exit code 2.
class validation_error : public std::invalid_argument {
public:
    explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical failure at runtime (NaN, overflow, non-finite state). Exit code 1.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace lsv
