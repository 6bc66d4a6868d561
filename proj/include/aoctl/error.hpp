#pragma once

#include <stdexcept>
#include <string>

namespace aoctl {

// Invalid arguments: bad bounds, mismatched sizes, malformed input files.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A closed-loop or filter expression hit a pole (1 + GK = 0, zero denominator).
class SingularityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Caller violated an operation precondition (e.g. non-stabilizing initial controller).
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Quantity is undefined for the given inputs (no 0 dB crossing, zero photon flux, ...).
class UndefinedError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ParameterError(message);
}

}  // namespace detail
}  // namespace aoctl
