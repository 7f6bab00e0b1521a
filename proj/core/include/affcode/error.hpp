#pragma once

#include <stdexcept>
#include <string>

namespace affcode {

/// Error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInternal,    // exit 1
  kInput,       // exit 2: malformed files, bad flags, inconsistent inputs
  kInfeasible,  // exit 3: a well-formed query with no solution
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A file or stream failed to parse. Carries the byte offset where it failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset);

  std::size_t offset() const noexcept { return offset_; }

  /// Same error with `context` (typically a file path) prepended.
  ParseError with_context(const std::string& context) const;

 private:
  struct Raw {};
  ParseError(Raw, const std::string& full_message, std::size_t offset)
      : Error(ErrorKind::kInput, full_message), offset_(offset) {}

  std::size_t offset_;
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::kInput, what) {}
};

class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what)
      : Error(ErrorKind::kInfeasible, what) {}
};

int exit_code_for(ErrorKind kind) noexcept;

}  // namespace affcode
