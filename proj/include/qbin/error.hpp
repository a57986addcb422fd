#pragma once

#include <stdexcept>
#include <string>

namespace qbin {

enum class ErrorKind {
  Usage,       // bad arguments / missing configuration
  Schema,      // unknown attribute, malformed schema
  Ingest,      // malformed rows, duplicate tuple ids
  Domain,      // value outside the supported domain (n = 0, oversized n, ...)
  Capacity,    // bin capacity violated
  Integrity,   // checksum/version mismatch, corrupt layout, tampered record
  Constraint,  // model constraint violated (e.g. sensitive parent joining cleartext child)
  Crypto,      // key handling / cipher failures
  Store,       // store I/O and protocol errors
  Audit,       // malformed adversarial-view log
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

const char* error_kind_name(ErrorKind kind);

}  // namespace qbin
