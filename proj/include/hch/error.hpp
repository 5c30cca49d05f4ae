#pragma once

#include <stdexcept>
#include <string>

namespace hch {

enum class ErrorKind {
  kArgument,    // bad parameter or precondition
  kParse,       // malformed input text/bytes
  kStructural,  // shape or dimension mismatch in input
  kIndex,       // index out of range
  kFormat,      // wrong magic / version in a binary file
  kNumerical,   // singular system, non-finite value
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

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::kArgument: return "argument error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kStructural: return "structural error";
    case ErrorKind::kIndex: return "index error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kNumerical: return "numerical error";
  }
  return "error";
}

}  // namespace hch
