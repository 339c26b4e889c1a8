#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace gped {

enum class ErrorKind {
  Dimension,  // shape/width mismatches
  Format,     // malformed files or streams
  Range,      // argument outside its documented domain
  Contract,   // violated runtime invariant (e.g. distribution does not sum to 1)
  Numeric,    // NaN/Inf or failed convergence
  Prune,      // structural pruning cannot proceed
  Config,     // invalid experiment configuration
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) raise(kind, message);
}

}  // namespace gped
