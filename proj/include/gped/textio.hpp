#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace gped {

// Pinned numeric text form: printf "%.17g", enough digits that strtod
// round-trips every finite double bit-exactly.
std::string format_g17(double v);

// FNV-1a 64-bit over raw bytes; used to fingerprint the resolved run manifest.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace gped
