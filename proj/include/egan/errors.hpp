#pragma once

#include <stdexcept>
#include <string>

namespace egan {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};

struct ZeroProbabilityEntropy : Error {
  using Error::Error;
};

struct InvalidDuals : Error {
  using Error::Error;
};

struct DivisionByZeroSupport : Error {
  using Error::Error;
};

struct DegenerateBatch : Error {
  using Error::Error;
};

struct KTooLarge : Error {
  using Error::Error;
};

struct MissingEntropyTerm : Error {
  using Error::Error;
};

struct EmptySampleSet : Error {
  using Error::Error;
};

struct GridMismatch : Error {
  using Error::Error;
};

struct NonFinite : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace egan
