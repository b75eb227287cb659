#pragma once

#include <stdexcept>
#include <string>

namespace saltseg {

/// Broad failure classes; the CLI maps them onto process exit codes.
enum class ErrorKind {
  validation,  // malformed input, shape mismatch, bad configuration
  io,          // missing/unreadable/unwritable files
  numerical,   // NaN/Inf during training
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SALTSEG_DEFINE_ERROR(Name, Kind, Prefix)                            \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(Kind, Prefix + what) {}  \
  };

SALTSEG_DEFINE_ERROR(FormatError, ErrorKind::validation, std::string("format error: "))
SALTSEG_DEFINE_ERROR(BoundsError, ErrorKind::validation, std::string("bounds error: "))
SALTSEG_DEFINE_ERROR(ShapeError, ErrorKind::validation, std::string("shape error: "))
SALTSEG_DEFINE_ERROR(ValidationError, ErrorKind::validation, std::string("validation error: "))
SALTSEG_DEFINE_ERROR(ConfigError, ErrorKind::validation, std::string("configuration error: "))
SALTSEG_DEFINE_ERROR(DomainError, ErrorKind::validation, std::string("domain error: "))
SALTSEG_DEFINE_ERROR(LookupError, ErrorKind::validation, std::string("lookup error: "))
SALTSEG_DEFINE_ERROR(CompatibilityError, ErrorKind::validation, std::string("compatibility error: "))
SALTSEG_DEFINE_ERROR(OrchestrationError, ErrorKind::validation, std::string("orchestration error: "))
SALTSEG_DEFINE_ERROR(IoError, ErrorKind::io, std::string("I/O error: "))
SALTSEG_DEFINE_ERROR(NumericalError, ErrorKind::numerical, std::string("numerical failure: "))

#undef SALTSEG_DEFINE_ERROR

}  // namespace saltseg
