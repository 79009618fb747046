#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace amkt {

// Toolkit-wide exception type. Everything thrown on purpose is an Error;
// the CLI layer turns these into machine-readable diagnostics.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a computation produced NaN or Inf. Distinct so optimization
// loops can treat numerical blowups as retryable while real bugs propagate.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

namespace detail {
inline void format_parts(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_parts(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_parts(os, rest...);
}
}  // namespace detail

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  std::ostringstream os;
  detail::format_parts(os, parts...);
  throw Error(os.str());
}

template <typename... Parts>
void check(bool cond, const Parts&... parts) {
  if (!cond) fail(parts...);
}

template <typename... Parts>
[[noreturn]] void fail_numeric(const Parts&... parts) {
  std::ostringstream os;
  detail::format_parts(os, parts...);
  throw NumericError(os.str());
}

}  // namespace amkt
