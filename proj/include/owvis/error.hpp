#pragma once

#include <functional>
#include <stdexcept>
#include <string>

namespace owvis {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON syntax, missing or mistyped key).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is out of range or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or array shape does not satisfy an operation's precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A loss component became NaN or infinite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string component, const std::string& what)
      : Error(what), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

using WarningSink = std::function<void(const std::string&)>;

// Warnings go to stderr unless a sink is installed. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace owvis
