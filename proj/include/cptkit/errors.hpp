#pragma once

#include <stdexcept>
#include <string>

namespace cptkit {

// Bad invocation: unknown flags, inconsistent options. CLI exit code 1.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data: unreadable files, malformed records, domain violations
// discovered while processing user data. CLI exit code 2.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace cptkit
