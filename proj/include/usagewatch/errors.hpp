#pragma once

#include <stdexcept>

namespace usagewatch {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input row; the message carries the 1-based line number.
struct ParseError : Error {
  using Error::Error;
};

// Input is missing a required column.
struct SchemaError : Error {
  using Error::Error;
};

// Two rows map to the same (date, country) cell.
struct DuplicateEntryError : Error {
  using Error::Error;
};

// Too little data left to continue (e.g. fewer than two countries).
struct InsufficientDataError : Error {
  using Error::Error;
};

// A window where almost every column is constant cannot be standardized.
struct DegenerateWindowError : Error {
  using Error::Error;
};

// Window/dimension combination violates a PCA feasibility bound.
struct FeasibilityError : Error {
  using Error::Error;
};

// Vector/matrix dimensions do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid argument value.
struct ParameterError : Error {
  using Error::Error;
};

// The experiment baseline already contains flags for the target country.
struct InvalidBaselineError : Error {
  using Error::Error;
};

// Eigensolver failure or other numeric breakdown.
struct NumericError : Error {
  using Error::Error;
};

// File or network I/O failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace usagewatch
