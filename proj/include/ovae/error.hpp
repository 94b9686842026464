#pragma once

#include <stdexcept>
#include <string>

namespace ovae {

// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
  Dimension,  // shape/length mismatch between arguments
  Domain,     // argument outside its valid range
  Numeric,    // non-finite values, solver breakdown, ill-conditioning
  Config,     // malformed or out-of-range configuration
  Artifact,   // missing or inconsistent upstream file
  Io,         // unreadable/unparsable input file
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

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace ovae
