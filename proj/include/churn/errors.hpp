#ifndef CHURN_ERRORS_HPP
#define CHURN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace churn {

// Bad or degenerate input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite gradients or parameters during training. Exit code 3.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace churn

#endif
