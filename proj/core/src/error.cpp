#include "affcode/error.hpp"

#include <fmt/format.h>

namespace affcode {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : Error(ErrorKind::kInput, fmt::format("{} (at byte offset {})", what, offset)),
      offset_(offset) {}

ParseError ParseError::with_context(const std::string& context) const {
  return ParseError(Raw{}, fmt::format("{}: {}", context, what()), offset_);
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInput:
      return 2;
    case ErrorKind::kInfeasible:
      return 3;
    case ErrorKind::kInternal:
      break;
  }
  return 1;
}

}  // namespace affcode
