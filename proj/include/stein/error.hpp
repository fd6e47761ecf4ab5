#pragma once

#include <stdexcept>
#include <string>

namespace stein {

enum class ErrorKind { invalid_parameter, numeric, unsupported, config };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void invalid_parameter(const std::string& msg) {
  throw Error(ErrorKind::invalid_parameter, "invalid parameter: " + msg);
}
[[noreturn]] inline void numeric_error(const std::string& msg) {
  throw Error(ErrorKind::numeric, "numeric error: " + msg);
}
[[noreturn]] inline void unsupported(const std::string& msg) {
  throw Error(ErrorKind::unsupported, "unsupported: " + msg);
}

[[noreturn]] inline void config_error(const std::string& msg) {
  throw Error(ErrorKind::config, "config error: " + msg);
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) invalid_parameter(msg);
}

}  // namespace stein
