#pragma once

#include <stdexcept>
#include <string>

namespace neugap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NonSquare : public Error {
 public:
  using Error::Error;
};

class NonSymmetric : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ZeroVariantHasNoParams : public Error {
 public:
  ZeroVariantHasNoParams() : Error("zero mean function has no parameters") {}
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

// Data-side errors.
class MissingColumn : public Error {
 public:
  explicit MissingColumn(const std::string &name)
      : Error("missing column: " + name) {}
};

class EmptyTable : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DegenerateSplit : public Error {
 public:
  using Error::Error;
};

class SchemaMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_dims(bool ok, const std::string &what) {
  if (!ok) throw DimensionMismatch(what);
}

}  // namespace neugap
