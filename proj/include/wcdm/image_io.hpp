#pragma once

#include "wcdm/core.hpp"

#include <string>

namespace wcdm::data {

/// 8-bit RGB PNG -> (1,3,H,W) tensor in [0,1] by division with 255.
/// Grayscale and RGBA sources are accepted (replicated / alpha dropped).
Tensor load_image(const std::string& path);

/// Clamps to [0,1], rounds half away from zero to 8-bit, writes RGB PNG.
void save_image(const Tensor& image, const std::string& path);

}  // namespace wcdm::data
