#pragma once

#include <stdexcept>
#include <string>

namespace gbdt2nn {

/// Bad input data: unreadable files, malformed CSV/IDX, inconsistent shapes.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss or a solver broke down.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration or a violated call precondition.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace gbdt2nn
