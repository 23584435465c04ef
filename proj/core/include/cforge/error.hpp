#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cforge {

enum class Errc {
  invalid_argument,
  not_found,
  conflict,
  parse,
  io,
  upstream,
  numerical,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library. The code drives HTTP status mapping
/// in the service and exit codes in the CLI.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cforge
