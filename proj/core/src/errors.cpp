#include "spikeshort/errors.hpp"

namespace spikeshort {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::input: return "input error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::state: return "state error";
    case ErrorKind::format: return "format error";
    case ErrorKind::consistency: return "consistency error";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace spikeshort
