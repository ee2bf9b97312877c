#pragma once

#include <stdexcept>
#include <string>

namespace fpath {

enum class ErrorKind {
  InvalidArgument,
  Shape,
  Numeric,
  Degenerate,
  Format,
  Io,
};

/// Base exception for everything the library rejects. The kind maps 1:1 onto
/// the C API status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::Shape, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error(ErrorKind::Degenerate, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace fpath
