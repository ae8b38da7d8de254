#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace iaunet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension violations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad configuration values (file or programmatic).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numeric breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed external data (datasets, checkpoints, images).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <class T, class... Rest>
void format_into(std::ostringstream& os, T&& v, Rest&&... rest) {
  os << std::forward<T>(v);
  format_into(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <class... Ts>
std::string msg(Ts&&... parts) {
  std::ostringstream os;
  detail::format_into(os, std::forward<Ts>(parts)...);
  return os.str();
}

}  // namespace iaunet
