#pragma once

#include <stdexcept>
#include <string>

namespace bpr {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input: non-stochastic rows, bad indices, mismatched lengths.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Missing or inconsistent settings (e.g. solving an MDP that has no reward).
class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace bpr
