#ifndef RESQUANT_ERRORS_HPP
#define RESQUANT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace resquant {

// Caller-side misuse: bad shapes, bad configuration values, malformed files.
// The CLI maps this family to exit code 2.
class InvalidInputError : public std::runtime_error {
public:
    explicit InvalidInputError(const std::string& what) : std::runtime_error(what) {}
};

// A network whose layers do not compose, or a structural precondition
// violation (e.g. a batch-norm layer with no foldable predecessor).
class StructureError : public InvalidInputError {
public:
    explicit StructureError(const std::string& what) : InvalidInputError(what) {}
};

// Container loading/saving problems. Each failure mode carries a distinct
// message naming the offending tensor or field.
class IoError : public InvalidInputError {
public:
    explicit IoError(const std::string& what) : InvalidInputError(what) {}
};

// Iterative solver ran out of iterations; carries the last estimate so the
// caller can decide whether it is usable.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double last_estimate)
        : std::runtime_error(what), last_estimate(last_estimate) {}
    double last_estimate;
};

// Internal invariant violation. The CLI maps this to exit code 3.
class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

} // namespace resquant

#endif
