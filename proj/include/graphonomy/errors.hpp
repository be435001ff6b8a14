#pragma once

#include <stdexcept>
#include <string>

namespace graphonomy {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor/matrix dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Caller-supplied data is invalid (bad index, degenerate box, empty pool...).
struct InputError : Error {
    using Error::Error;
};

// An API precondition was violated (wrong tape, non-scalar loss, ...).
struct ContractError : Error {
    using Error::Error;
};

// Bad or inconsistent configuration.
struct ConfigError : Error {
    using Error::Error;
};

// File could not be read, written or parsed.
struct IoError : Error {
    using Error::Error;
};

// Stored data (checkpoint, sample file) fails its integrity check.
struct IntegrityError : Error {
    using Error::Error;
};

// Synthetic scene generation cannot satisfy the request.
struct GenerationError : Error {
    using Error::Error;
};

// Label taxonomy is inconsistent with the requested operation.
struct TaxonomyError : Error {
    using Error::Error;
};

}  // namespace graphonomy
