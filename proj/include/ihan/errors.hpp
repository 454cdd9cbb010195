#pragma once

#include <stdexcept>
#include <string>

namespace ihan {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape mismatch between tensors; message names both shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input that makes an operation meaningless (empty encounter, all-false mask, ...).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

// Training set whose labels are all identical.
class DegenerateLabelError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Metric undefined for the given inputs (e.g. AUC with a single class).
class MetricError : public Error {
public:
    using Error::Error;
};

// Two structures that must describe the same object disagree.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite value where a finite one is required.
class EvalError : public Error {
public:
    using Error::Error;
};

} // namespace ihan
