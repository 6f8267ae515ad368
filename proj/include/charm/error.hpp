#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace charm {

enum class Errc {
  validation,
  parse,
  integrity,
  duplicate_key,
  domain,
  protocol,
  not_found,
  conflict,
  io,
  training,
  degenerate,
};

inline std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::validation: return "validation";
    case Errc::parse: return "parse";
    case Errc::integrity: return "integrity";
    case Errc::duplicate_key: return "duplicate_key";
    case Errc::domain: return "domain";
    case Errc::protocol: return "protocol";
    case Errc::not_found: return "not_found";
    case Errc::conflict: return "conflict";
    case Errc::io: return "io";
    case Errc::training: return "training";
    case Errc::degenerate: return "degenerate";
  }
  return "unknown";
}

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), message_(message) {}

  Errc code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

}  // namespace charm
