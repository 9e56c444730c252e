#pragma once

#include <stdexcept>
#include <string>

namespace hierstab {

// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Bad arguments, malformed descriptors, violated preconditions.
// The command-line driver maps this family to exit code 2.
class validation_error : public error {
public:
    using error::error;
};

// Requested exact computation exceeds the enumeration budget (exit code 3).
class capacity_error : public error {
public:
    using error::error;
};

// An iterative numerical routine failed to converge (exit code 4).
class numerical_error : public error {
public:
    using error::error;
};

// A value table is not multilinear over its supports, so it has no
// multilinear expansion to certify.
class not_multilinear_error : public validation_error {
public:
    using validation_error::validation_error;
};

// Tree wiring violates the composition rules (block overlap, arity < 2,
// leaves not covering the coordinate set).
class structure_error : public validation_error {
public:
    using validation_error::validation_error;
};

// A component failed its declared non-linearity level.
class certification_error : public validation_error {
public:
    using validation_error::validation_error;
};

}  // namespace hierstab
