#pragma once

#include <stdexcept>
#include <string>

namespace nswip {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or inputs (non-finite points, out-of-range parameters).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Billiard geometry failures: tangential states, missing intersections.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A first-return search ran past its iteration cap.
class RunawayExcursion : public Error {
 public:
  RunawayExcursion(const std::string& what, unsigned long long partial_steps)
      : Error(what), partial_steps_(partial_steps) {}
  unsigned long long partial_steps() const noexcept { return partial_steps_; }

 private:
  unsigned long long partial_steps_;
};

/// A numerical procedure failed to converge (quadrature, operator series).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Bad experiment configuration; maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem / persistence failure; maps to CLI exit code 3.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nswip
