#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tvspec {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad dimensions, horizons, file contents, options.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A factor that had to be inverted is singular (below the invertibility floor).
class SingularityError : public Error {
 public:
  SingularityError(std::int64_t index, const std::string& what)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  std::int64_t index() const noexcept { return index_; }

 private:
  std::int64_t index_;
};

/// Products left the representable range even after renormalization.
class NumericalRangeError : public Error {
 public:
  using Error::Error;
};

/// Feedback synthesis could not produce a well-conditioned closed loop.
class SynthesisError : public Error {
 public:
  SynthesisError(std::int64_t window_start, const std::string& what)
      : Error(what + " (window starting at " + std::to_string(window_start) + ")"),
        window_start_(window_start) {}

  std::int64_t window_start() const noexcept { return window_start_; }

 private:
  std::int64_t window_start_;
};

/// The system is not uniformly completely controllable within the tested windows.
class ControllabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace tvspec
