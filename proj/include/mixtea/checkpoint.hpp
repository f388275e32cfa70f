#pragma once

#include <filesystem>

#include "mixtea/encoder.hpp"

namespace mixtea {

struct Checkpoint {
  EncoderConfig encoder;
  ModelParams params;
};

// Plain-text format: a version line, encoder settings, then one
// `tensor <name> <rows> <cols>` header per tensor followed by its rows.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mixtea
