#include "cforge/error.hpp"

namespace cforge {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::not_found: return "not_found";
    case Errc::conflict: return "conflict";
    case Errc::parse: return "parse";
    case Errc::io: return "io";
    case Errc::upstream: return "upstream";
    case Errc::numerical: return "numerical";
  }
  return "unknown";
}

}  // namespace cforge
