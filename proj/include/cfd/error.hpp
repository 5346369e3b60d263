#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfd {

// Base of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps it to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// History does not end in a user turn, or contains an empty utterance.
class MalformedHistoryError : public Error {
 public:
  using Error::Error;
};

// A value object failed its construction invariants (bad distribution,
// duplicate ids, broken template, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Text input could not be parsed. Carries a 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Two vectors that must share a vocabulary have different lengths.
class SizeMismatchError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Remote backend unreachable, timed out, or answered with garbage.
class BackendError : public Error {
 public:
  using Error::Error;
};

// Provider failure surfaced from inside a decode loop, tagged with the
// stream that issued the query and the 1-based step index.
class DecodeError : public Error {
 public:
  DecodeError(std::string stream, std::size_t step, const std::string& cause)
      : Error(stream + " stream, step " + std::to_string(step) + ": " + cause),
        stream_(std::move(stream)),
        step_(step) {}

  const std::string& stream() const noexcept { return stream_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::string stream_;
  std::size_t step_;
};

}  // namespace cfd
