#pragma once

#include <stdexcept>
#include <string>

namespace asl {

/// Invalid configuration or parameter values (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incorrect API usage (mismatched lengths, unknown method, off-tape variable).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problems with input data: malformed files, missing ground truth,
/// masks too small for the requested operation (CLI exit code 2).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed dataset/results file; the message names the offending field.
class ParseError : public DataError {
public:
    using DataError::DataError;
};

/// A metric whose preconditions are not met (e.g. zero target value).
class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace asl
