#pragma once

#include <filesystem>

#include "udnet/image.hpp"

namespace udnet {

/// Reads an 8-bit PNG (RGB/RGBA/grey, alpha discarded) or binary PPM (P6,
/// maxval 255). Values map to [0,1] as v/255.
ImageTensor load_image(const std::filesystem::path& path);

/// Writes an RGB image as 8-bit PNG or PPM depending on the extension
/// (.ppm -> P6, everything else -> PNG). Values map as round(v*255), clamped.
void save_image(const ImageTensor& img, const std::filesystem::path& path);

}  // namespace udnet
