#pragma once

#include <stdexcept>
#include <string>

namespace partstyle {

// Base for every error the library raises. Subclasses only narrow the kind so
// callers (and the CLI) can map them to exit codes and messages.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string location)
      : Error(what + " at " + location), location_(std::move(location)) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

class TruncationError : public Error {
 public:
  TruncationError(std::size_t length, std::size_t limit)
      : Error("sequence of " + std::to_string(length) + " tokens exceeds the limit of " + std::to_string(limit)),
        length_(length),
        limit_(limit) {}
  std::size_t length() const noexcept { return length_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t length_, limit_;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Wraps a failure from one pipeline stage so the stage name survives.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace partstyle
