#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mctree {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed JSON; `offset()` is the zero-based index of the offending byte.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Well-formed JSON that violates the loop-nest schema.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// A transformation was applied to a nest it does not structurally fit.
/// The child generator never proposes such a transformation, so reaching
/// this is a programming error rather than a compiler-side rejection.
class ApplicabilityError : public Error {
 public:
  using Error::Error;
};

class RewriteError : public Error {
 public:
  using Error::Error;
};

/// Misconfigured evaluation, e.g. the compiler produced no loop-nest file.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// The evaluation machinery itself failed (executable not found, fork failure).
class InfrastructureError : public Error {
 public:
  using Error::Error;
};

class ResumeError : public Error {
 public:
  using Error::Error;
};

class BaselineFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace mctree
