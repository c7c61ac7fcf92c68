#pragma once

#include <stdexcept>
#include <string>

namespace rolefuse {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, ids, shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Raised by lookup when an id is absent from an embedding table.
class MissingIdError : public DataError {
 public:
  explicit MissingIdError(std::string id)
      : DataError("missing embedding id: '" + id + "'"), id_(std::move(id)) {}

  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

}  // namespace rolefuse
