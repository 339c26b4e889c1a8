#include "gped/errors.hpp"

namespace gped {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Format: return "format";
    case ErrorKind::Range: return "range";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Prune: return "prune";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(error_kind_name(kind)) + " error: " + message);
}

}  // namespace gped
