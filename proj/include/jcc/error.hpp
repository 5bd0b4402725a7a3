#pragma once

#include <stdexcept>
#include <string>

namespace jcc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: bad model file, bad config, out-of-range index.
class ValidationError : public Error {
public:
    using Error::Error;
};

// A configured size limit (action count, grid points, tree nodes, window keys) would be exceeded.
class CapExceeded : public Error {
public:
    using Error::Error;
};

// The conditioning event Q^{-1}(q) has zero probability under the belief.
class UnreachableSymbol : public Error {
public:
    using Error::Error;
};

class InfeasibleHistory : public Error {
public:
    using Error::Error;
};

// The simulated source state lies outside the support of the tracked belief.
class BeliefDesync : public Error {
public:
    using Error::Error;
};

class IncompatiblePolicy : public Error {
public:
    using Error::Error;
};

class NotErgodic : public Error {
public:
    using Error::Error;
};

class AbsoluteContinuityViolated : public Error {
public:
    using Error::Error;
};

} // namespace jcc
