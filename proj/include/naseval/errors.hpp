#pragma once

#include <stdexcept>
#include <string>

namespace naseval {

/// Requested operation needs more enumeration room than the spec allows.
class SpaceTooLargeError : public std::runtime_error {
 public:
  explicit SpaceTooLargeError(const std::string& what) : std::runtime_error(what) {}
};

/// An architecture or key violates its search-space constraints.
class InvalidArchError : public std::runtime_error {
 public:
  explicit InvalidArchError(const std::string& what) : std::runtime_error(what) {}
};

/// Lookup of a key that is not in the table.
class NotFoundError : public std::runtime_error {
 public:
  explicit NotFoundError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file; message carries the line number where known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Same key appears twice in one table.
class DuplicateKeyError : public std::runtime_error {
 public:
  explicit DuplicateKeyError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad arguments to a library call or CLI invocation.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace naseval
