#pragma once

#include <cstdint>
#include <string>

#include "cft/transformer.hpp"

namespace cft {

struct Checkpoint {
  Model model;
  uint64_t seed = 0;
  int64_t step = 0;
};

// Binary container: magic, JSON config header, seed, step count, then raw
// little-endian f64 payloads per named tensor (row-major).
void save_checkpoint(const std::string& path, const Model& m, uint64_t seed, int64_t step);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cft
