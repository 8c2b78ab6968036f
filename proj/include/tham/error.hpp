#pragma once

#include <stdexcept>
#include <string>

namespace tham {

// Maps onto the process exit codes used by the CLI.
enum class ErrorKind {
  Config = 2,   // bad configuration, schema or argument
  Numeric = 3,  // non-finite loss or gradient
  Io = 4,       // file missing, unreadable or unwritable
  Parse = 5,    // malformed input content
  Shape = 6,    // tensor shape mismatch
  Invalid = 7,  // precondition violated by the caller
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace tham
