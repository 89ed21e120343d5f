#pragma once

#include <stdexcept>
#include <string>

namespace nextact {

// Error categories map 1:1 onto CLI exit codes:
//   UsageError -> 2, DataError -> 3, NumericError / DimensionError -> 4.

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : NumericError {
    explicit DimensionError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace nextact
