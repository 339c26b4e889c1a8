#pragma once

#include <string>

#include "gped/network.hpp"

namespace gped {

// JSON model format. Numbers are written as decimal with 17 significant
// digits, so save -> load round-trips parameters bit-exactly.
std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);

void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace gped
