#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace ibc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// User-facing configuration or usage problems (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem problems (CLI exit code 3).
struct IoError : Error {
  using Error::Error;
};

// Numeric breakdown: non-finite values, failed convergence (CLI exit code 4).
struct NumericError : Error {
  using Error::Error;
};

// Malformed tensor shapes in graph operations.
struct ShapeError : Error {
  using Error::Error;
};

namespace detail {
inline void strf_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void strf_append(std::ostringstream& os, T&& v, Rest&&... rest) {
  os << std::forward<T>(v);
  strf_append(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

// Stream-concatenate arguments into a string; used for error messages.
template <typename... Args>
std::string strf(Args&&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::strf_append(os, std::forward<Args>(args)...);
  return os.str();
}

}  // namespace ibc
