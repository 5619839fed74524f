#pragma once

#include <stdexcept>
#include <string>

namespace gwpoct {

/// Error categories carried across the library and mapped onto C API status codes.
enum class Errc {
  invalid_argument = 1,  // bad parameters, inconsistent bounds, malformed requests
  domain,                // physics breakdown: alpha <= 0, grid support, norm drift
  io,                    // file system failures
  parse,                 // config / CSV syntax problems
  solver,                // NLP solver failures
  missing_input,         // prerequisite results absent
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace gwpoct
