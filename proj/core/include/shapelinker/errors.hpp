#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shapelinker {

// Input that violates an operation's precondition (bad sizes, malformed
// files, unreadable paths). Maps to exit code 2 at the CLI.
class InvalidInputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Text that failed to parse; carries the byte offset of the first offending
// character.
class ParseError : public InvalidInputError {
public:
  ParseError(std::size_t offset, const std::string& what)
      : InvalidInputError("syntax error at byte " + std::to_string(offset) +
                          ": " + what),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

// Numeric failure inside a computation (non-finite activation or gradient,
// diverged optimization). Maps to exit code 3 at the CLI.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Training loop failed; remembers the epoch where it happened.
class TrainingError : public NumericError {
public:
  TrainingError(int epoch, const std::string& what)
      : NumericError("training failed at epoch " + std::to_string(epoch) +
                     ": " + what),
        epoch_(epoch) {}

  int epoch() const { return epoch_; }

private:
  int epoch_ = -1;
};

// Surface sampling could not place enough points; carries diagnostics.
class SamplingError : public NumericError {
public:
  SamplingError(const std::string& what, std::size_t seeds,
                std::size_t failures)
      : NumericError(what + " (" + std::to_string(failures) + "/" +
                     std::to_string(seeds) + " seeds failed)"),
        seeds_(seeds),
        failures_(failures) {}

  std::size_t seed_count() const { return seeds_; }
  std::size_t failure_count() const { return failures_; }

private:
  std::size_t seeds_ = 0;
  std::size_t failures_ = 0;
};

}  // namespace shapelinker
