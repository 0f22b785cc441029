#pragma once

#include <stdexcept>
#include <string>

namespace itolab {

/// Violated precondition on user input (bad exponent, radius, constraint...).
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite coefficient, degenerate diffusion, quadrature failure.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too many right-censored stopping outcomes for the requested estimate.
class CensoredError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Error raised while simulating one path of a batch; carries the path index.
class PathError : public std::runtime_error {
public:
    PathError(std::size_t index, const std::string& what)
        : std::runtime_error("path " + std::to_string(index) + ": " + what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw PreconditionError(msg);
}

}  // namespace itolab
